__version__ = "0.1"

__all__ = [
    "midi",
    "tokenizer",
    "critic",
    "surprisal",
    "curves",
    "search",
    "analysis",
    "cli",
]


class IICError(Exception):
    """
    Base Exception class for this package.
    """
    def __init__(self, value):
        super(IICError, self).__init__(value)
        self._value = value

    def __repr__(self):
        return "%s(%r)" % (self.__class__.__name__, self._value)

    def __str__(self):
        return "%s: %s" % (self.__class__.__name__, self._value)


class DomainError(IICError):
    """
    An argument falls outside the domain of the operation.
    """
    pass
