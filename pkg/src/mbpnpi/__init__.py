"""Critical Markov branching processes with non-homogeneous Poisson immigration."""
