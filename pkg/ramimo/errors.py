# NOTES:
# Domain errors. Solver non-convergence is reported through a status, never raised.


class RamimoError(Exception):
    pass


class ScenarioError(RamimoError, ValueError):
    pass


class ChannelError(RamimoError, ValueError):
    pass


class OptimizerError(RamimoError, RuntimeError):
    pass


class ConfigError(RamimoError, ValueError):
    pass
