from typing import Any, TypeVar

__all__ = ('undefined', 'UndefinedType', 'resolve')

T = TypeVar('T')


class UndefinedType:
    """The type of :data:`undefined`, a marker for config fields whose
    value is derived from other fields until set explicitly."""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return '<undefined>'

    def __bool__(self):
        return False

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        return (UndefinedType, ())


undefined = UndefinedType()


def resolve(value: Any, fallback: T) -> T:
    """Returns `fallback` when `value` is :data:`undefined`."""
    if value is undefined:
        return fallback
    return value
