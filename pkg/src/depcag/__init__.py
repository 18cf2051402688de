"""
Filename: __init__.py
Description:
    depcag - conjugacy construction and certification for DEPCAG systems.

License: Apache 2.0
"""
__version__ = "0.1.0"
