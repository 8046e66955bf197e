"""
Dataset ingestion for PoseLift
"""
