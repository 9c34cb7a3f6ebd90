"""
Label-free Performance Monitor
Main package initialization
"""

__version__ = "1.0.0"
__author__ = "Label-free Monitor"
__description__ = "Label-free performance estimation for binary classifiers under dataset shift"
