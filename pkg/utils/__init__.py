"""
Utils package for advgen.
Provides logging, schema validation, file formats, performance tracking
and report charts.
"""

# Logging
from utils.logger import get_logger

# Validation
from utils.validator import ConfigValidator, ValidationError

# File handling
from utils.file_handler import FileHandler

# Performance tracking
from utils.performance import PerformanceTracker

__all__ = [
    'get_logger',
    'ConfigValidator',
    'ValidationError',
    'FileHandler',
    'PerformanceTracker',
]
