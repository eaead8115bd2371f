"""Models used across the tests."""

from mbpnpi.laws import ImmigrationLaw, Intensity, ModelSpec, OffspringLaw


def model(alpha, gamma, c=0.5, c_imm=1.0, mu=1.0, rho=1.0):
    return ModelSpec(mu, OffspringLaw("PurePower", gamma, c), ImmigrationLaw("ScaledSibuya", alpha, c_imm),
                     Intensity("Constant", rho))


def log_power_model(c_imm=0.1):
    return ModelSpec(1.0, OffspringLaw("LogPower", 0.5, 0.4, 0.25), ImmigrationLaw("ScaledSibuya", 0.5, c_imm),
                     Intensity("Constant", 1.0))
