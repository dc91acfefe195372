# -*- coding: utf-8 -*-
"""Exception types shared by the library modules and mapped to exit codes by cli.py."""


class UqkitError(Exception):
    pass


class DataError(UqkitError, ValueError):
    """Malformed input file or a violated data invariant."""


class ConfigError(UqkitError, ValueError):
    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key


class MissingPathError(ConfigError):
    pass


class UnsupportedCapability(UqkitError):
    def __init__(self, capability: str, backend: str = ""):
        super().__init__(f"unsupported capability: {capability}" + (f" ({backend})" if backend else ""))
        self.capability = capability


class InsufficientSamples(DataError):
    pass


class ModelFormatError(DataError):
    """Bad header, version mismatch or truncated model/index file."""
