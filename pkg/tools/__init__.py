"""
Utility scripts for emtriage.
"""
