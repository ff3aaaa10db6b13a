"""Bridge server exposing a pretrained time-series model over stdin/stdout
JSON lines (protocol version 1). Inference only: the model never sees a
gradient update.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = "1"
