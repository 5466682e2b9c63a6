"""
Event-study and report-sentiment toolkit
"""
__version__ = "0.1.0"
