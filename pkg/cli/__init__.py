# Command-line interface for PoseLift
