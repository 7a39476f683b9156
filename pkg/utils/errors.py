class ConsoleError(Exception):
    pass


class DomainError(ConsoleError):
    """
    A symbol was evaluated outside its domain (log/sqrt of a non-admissible argument).

    When raised from training, `epoch` is the epoch at failure and `last_weights`
    holds the last in-domain weights.
    """

    def __init__(self, message, op_name=None, epoch=None, last_weights=None):
        super().__init__(message)
        self.op_name = op_name
        self.epoch = epoch
        self.last_weights = last_weights


class StructureError(ConsoleError):
    pass


class ShapeError(ConsoleError):
    pass


class DegenerateError(ConsoleError):
    pass


class ConsistencyError(ConsoleError):
    pass


class EpisodeAborted(ConsoleError):
    def __init__(self, message, stage=None, rejects=0):
        super().__init__(message)
        self.stage = stage
        self.rejects = rejects


class ConfigError(ConsoleError):
    pass
