"""Error taxonomy for the exporter.

ArgumentError covers bad job parameters (unknown model, bad layer list,
malformed input tables). AudioFormatError covers audio files that exist but
are not in the accepted encoding; its messages always say how to fix the
file, since the exporter refuses to resample by design.
"""


class ExporterError(Exception):
    """Base class for everything this package raises on purpose."""


class ArgumentError(ExporterError):
    pass


class AudioFormatError(ExporterError):
    pass
