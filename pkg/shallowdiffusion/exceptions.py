#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Error hierarchy. Every class also derives from the builtin exception that plain code would raise,
     so `except ValueError` keeps working for callers that do not know this package.
    exit_code is what the CLI returns when the error escapes a subcommand.
"""


class ShallowDiffusionError(Exception):
    exit_code = 1


class DomainError(ShallowDiffusionError, ValueError):
    """An argument is outside the mathematical domain of the operation (e.g. t = 0 where sigma_t = 0)"""


class SingularCovarianceError(DomainError):
    pass


class ConfigurationError(ShallowDiffusionError, ValueError):
    """A configuration constraint is violated. The message names the constraint."""
    exit_code = 3


class ModelError(ShallowDiffusionError, ValueError):
    pass


class AlignmentError(ShallowDiffusionError, ValueError):
    pass


class InsufficientGridError(ShallowDiffusionError, ValueError):
    pass


class ProviderError(ShallowDiffusionError, LookupError):
    def __init__(self, missing_times):
        self.missing_times = list(missing_times)
        super().__init__('No score available for forward times: {0}'.format(
            ', '.join('{0:.12g}'.format(t) for t in self.missing_times)))

    def __reduce__(self):
        return type(self), (self.missing_times,)


class TrainingError(ShallowDiffusionError, RuntimeError):
    def __init__(self, message, t=None, trace=None):
        self.t = t
        self.trace = trace if trace is not None else []
        self._message = message
        if t is not None:
            message = 'Training failed at t={0:.12g}: {1}'.format(t, message)
        super().__init__(message)

    def __reduce__(self):
        # Travels back from Pool workers with t and the trace intact
        return type(self), (self._message, self.t, self.trace)
