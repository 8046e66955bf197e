# Core modules for PoseLift
__version__ = "0.1.0"
