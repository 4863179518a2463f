"""Exception types shared across the exploration stack"""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract"""


class SingularityError(ArithmeticError):
    """Raised when a linearization point is degenerate"""


class ParseError(InvalidInputError):
    """Raised by the text readers; remembers the offending line"""

    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        self.detail = detail
        message = f"parse error: line {line_no}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ConfigError(ValueError):
    """Raised when a configuration value is outside its declared range"""


class NoCandidatesError(RuntimeError):
    """No frontier survived evaluation; exploration is over"""
