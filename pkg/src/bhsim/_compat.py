import sys

__all__ = ["ExceptionGroup"]

if sys.version_info >= (3, 11):
    from builtins import ExceptionGroup
else:
    from exceptiongroup import ExceptionGroup
