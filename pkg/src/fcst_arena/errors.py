"""Exception families used across the harness.

Each family maps to one CLI exit code (see cli.EXIT_CODES).
"""


class FcstArenaError(Exception):
    """Base class for all harness errors."""


# --- dataset ---------------------------------------------------------------

class DataError(FcstArenaError):
    pass


class MissingColumn(DataError):
    pass


class EmptySeries(DataError):
    pass


class IoError(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class BadFractions(DataError):
    pass


class EmptyTrain(DataError):
    pass


# --- tensor-nn / forecasters ------------------------------------------------

class NnError(FcstArenaError):
    pass


class ShapeMismatch(NnError):
    pass


class BadRate(NnError):
    pass


class MissingGradient(NnError):
    pass


class BadConfig(NnError):
    pass


class NumericError(NnError):
    """NaN/inf loss or parameters during training; carries diagnostics."""


# --- prompt-forecaster -------------------------------------------------------

class PromptError(FcstArenaError):
    pass


class NonFiniteValue(PromptError):
    pass


class NoShots(PromptError):
    pass


class NotEnoughSamples(PromptError):
    pass


class ParseError(PromptError):
    """Base for failures turning a raw LLM response into numbers."""


class NoJsonFound(ParseError):
    pass


class WrongCount(ParseError):
    pass


class MalformedNumber(ParseError):
    pass


class ProviderError(PromptError):
    pass


class AuthError(ProviderError):
    pass


class ProviderTimeout(ProviderError):
    pass


class RetriesExhausted(ProviderError):
    """All attempts failed; the last cause is attached as __cause__."""


# --- bridge-protocol ----------------------------------------------------------

class BridgeFault(FcstArenaError):
    pass


class SpawnFailed(BridgeFault):
    pass


class HandshakeTimeout(BridgeFault):
    pass


class VersionMismatch(BridgeFault):
    pass


class BridgeError(BridgeFault):
    """Error envelope returned by the server."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class ProtocolViolation(BridgeFault):
    pass


class BridgeBrokenPipe(BridgeFault):
    pass


class BridgeTimeout(BridgeFault):
    pass


# --- evaluation ---------------------------------------------------------------

class EvalError(FcstArenaError):
    pass


class LengthMismatch(EvalError):
    pass


class EmptyInput(EvalError):
    pass


class CountMismatch(EvalError):
    pass


# --- cli ------------------------------------------------------------------------

class ConfigError(FcstArenaError):
    """Bad run config file: schema violation or unknown key."""
