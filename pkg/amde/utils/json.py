from __future__ import annotations

import json
from typing import (
    Any,
    ByteString,
    Callable,
    Dict,
    Generic,
    Optional,
    Tuple,
    Type,
    TypeVar,
    Union
)

from ..errors import ConfigError
from .undefined import undefined

__all__ = ('JsonTemplate', 'JsonField', 'JsonArray', 'JsonObject',
           'dumps_canonical')

T = TypeVar('T')
J = TypeVar('J', bound='JsonObject')


def dumps_canonical(data: Any) -> str:
    """Serializes `data` with sorted keys and fixed separators so that
    equal documents always produce identical text.
    """
    return json.dumps(data, sort_keys=True, separators=(',', ':'),
                      allow_nan=False)


class JsonTemplate(Generic[T]):
    r"""A template for a :class:`JsonObject`.

    Arguments
        __extends__: Optional[Tuple[JsonTemplate]]
            The :class:`JsonTemplate` s that this template extends,
            this template will receive all fields of the extended templates.

        \*\*fields: JsonField
            The fields of this template, the argument name
            will be the name of the attribute when unmarshalled.
    """
    def __init__(self, *,
                 __extends__: Optional[Tuple[JsonTemplate, ...]] = None,
                 **fields: JsonField) -> None:
        self.fields: Dict[str, JsonField] = {}
        if __extends__ is not None:
            for template in __extends__:
                self.fields.update(template.fields)
        self.fields.update(fields)

    @property
    def keys(self) -> Dict[str, str]:
        return {field.key: name for name, field in self.fields.items()}

    def _update(self, o: T, data: Dict[str, Any], *,
                set_default: bool = False) -> None:
        keys = self.keys
        for key in data:
            if key not in keys:
                raise ConfigError(
                    f'unknown key {key!r} for {type(o).__name__}', key)

        for name, field in self.fields.items():
            if field.key in data:
                try:
                    value = field.unmarshal(data[field.key])
                except ConfigError:
                    raise
                except Exception as e:
                    raise ConfigError(
                        f'invalid value for {field.key!r}: {e}',
                        field.key) from e
                setattr(o, name, value)
            elif set_default:
                setattr(o, name, field.make_default())

    def to_dict(self, o: Any) -> Dict[str, Any]:
        """Converts `o` to a dict based on the fields
        of the template.

        Arguments
            o: Any
                The object to convert to a dict.

        Returns
            dict[str, Any]
                The dict, fields holding :data:`undefined`
                or omitted empty values are left out.
        """
        data = {}

        for name, field in self.fields.items():
            value = getattr(o, name, None)

            if value is undefined:
                continue

            if value is None and field.omitempty:
                continue

            data[field.key] = field.marshal(value)

        return data

    def marshal(self, o: Any) -> str:
        """Converts `o` to a canonical json document.

        Equivalent to::

            dumps_canonical(self.to_dict(o))
        """
        return dumps_canonical(self.to_dict(o))


class JsonField:
    """A single key of a :class:`JsonTemplate`.

    Arguments
        key: str
            The json key.

        unmarshal: Optional[Callable[[Any], Any]]
            Converts (and validates) the json value, any exception
            raised is reported as a :exc:`ConfigError`.

        marshal: Optional[Callable[[Any], Any]]
            Converts the attribute back to a json value.

        object: Optional[Type[JsonObject]]
            A nested object type, overrides `unmarshal` and `marshal`.

        default: Any
            The default value, called when it is callable.

        omitempty: bool
            Whether None is left out of the marshalled dict.
    """
    _unmarshal: Optional[Callable[..., Any]]
    _marshal: Optional[Callable[[Any], Any]]

    def __init__(self, key: str,
                 unmarshal: Optional[Callable[..., Any]] = None,
                 marshal: Optional[Callable[[Any], Any]] = None,
                 object: Optional[Type[JsonObject]] = None,
                 default: Any = None, omitempty: bool = False) -> None:
        self.key = key
        self.object = object
        self.default = default
        self.omitempty = omitempty

        if object is not None:
            self._unmarshal = object.unmarshal
            self._marshal = object.__template__.to_dict
        else:
            self._unmarshal = unmarshal
            self._marshal = marshal

    def make_default(self) -> Any:
        if callable(self.default):
            return self.default()
        return self.default

    def unmarshal(self, value: Any) -> Any:
        if value is None or self._unmarshal is None:
            return value
        if self.object is not None and isinstance(value, self.object):
            return value
        return self._unmarshal(value)

    def marshal(self, value: Any) -> Any:
        if value is None or self._marshal is None:
            return value
        return self._marshal(value)


class JsonArray(JsonField):
    def __init__(self, *args, **kwargs) -> None:
        kwargs.setdefault('default', list)
        super().__init__(*args, **kwargs)

    def unmarshal(self, values: Any) -> Any:
        if values is None:
            return None
        if isinstance(values, (str, bytes, dict)):
            raise TypeError(f'expected an array, got {type(values).__name__}')
        return [super(JsonArray, self).unmarshal(value) for value in values]

    def marshal(self, values: Any) -> Any:
        if values is None:
            return None
        return [super(JsonArray, self).marshal(value) for value in values]


class JsonObjectMeta(type):
    def __new__(mcs: Type[type], name: str,
                bases: Tuple[type, ...], attrs: Dict[str, Any],
                template: Optional[JsonTemplate] = None) -> JsonObjectMeta:
        slots = set(attrs.pop('__slots__', ()))
        if template is not None:
            inherited = set()
            for base in bases:
                base_template = getattr(base, '__template__', None)
                if base_template is not None:
                    inherited.update(base_template.fields)
            slots.update(set(template.fields) - inherited)

        attrs['__slots__'] = tuple(sorted(slots))
        if template is not None:
            attrs['__template__'] = template

        return super().__new__(mcs, name, bases, attrs)  # type: ignore


class JsonObject(metaclass=JsonObjectMeta, template=JsonTemplate()):
    """An object whose attributes are described by a :class:`JsonTemplate`.

    Instances can be created from keyword arguments (attribute names) or
    from json data with :meth:`JsonObject.unmarshal`, in both cases unknown
    names are rejected and missing names take the field default.
    """
    __template__: JsonTemplate

    def __new__(cls, *args, **kwargs) -> JsonObject:
        if cls is JsonObject:
            raise TypeError(f'Cannot create instances of {cls.__name__!r}')
        return object.__new__(cls)

    def __init__(self, **fields: Any) -> None:
        template = self.__template__
        for name in fields:
            if name not in template.fields:
                raise ConfigError(
                    f'unknown field {name!r} for {type(self).__name__}', name)
        data = {template.fields[name].key: value
                for name, value in fields.items()}
        template._update(self, data, set_default=True)
        self.__validate__()

    def __validate__(self) -> None:
        """Called after construction, subclasses raise
        :exc:`ConfigError` for invalid combinations."""

    @classmethod
    def unmarshal(cls: Type[J], data: Union[ByteString, str, dict]) -> J:
        if isinstance(data, (bytes, bytearray, memoryview)):
            data = bytes(data).decode('utf-8')
        if isinstance(data, str):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as e:
                raise ConfigError(f'invalid json: {e}') from e
        if not isinstance(data, dict):
            raise ConfigError(
                f'expected an object for {cls.__name__}, '
                f'got {type(data).__name__}')

        o = object.__new__(cls)
        o._update(data, set_default=True)
        o.__validate__()

        return o

    def replace(self: J, **changes: Any) -> J:
        """Returns a copy with `changes` applied."""
        data = self.to_dict()
        template = self.__template__
        for name, value in changes.items():
            if name not in template.fields:
                raise ConfigError(
                    f'unknown field {name!r} for {type(self).__name__}', name)
            field = template.fields[name]
            if isinstance(value, JsonObject):
                value = value.to_dict()
            data[field.key] = value
        return type(self).unmarshal(data)

    def _update(self, *args, **kwargs):
        return self.__template__._update(self, *args, **kwargs)

    def to_dict(self, *args, **kwargs):
        return self.__template__.to_dict(self, *args, **kwargs)

    def marshal(self, *args, **kwargs):
        return self.__template__.marshal(self, *args, **kwargs)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, self.__class__):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        fields = ', '.join(f'{k}={v!r}' for k, v in self.to_dict().items())
        return f'{self.__class__.__name__}({fields})'
