"""Shared exception base for the normcheck package."""


class NormCheckError(Exception):
    """Base class for all errors raised by normcheck modules."""


class XmlSyntaxError(NormCheckError):
    """Input XML is not well formed."""
