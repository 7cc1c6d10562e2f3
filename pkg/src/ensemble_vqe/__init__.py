"""Three-state ensemble-VQE for H4+ on a deterministic state-vector emulator."""

__version__ = "0.1.0"

MODEL_ONVS = ("11001000", "10101000", "10011000")
INITIAL_ONV = "10001000"
LABELS = ("A", "B", "C")
