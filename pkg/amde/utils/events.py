from __future__ import annotations

import functools
import logging
from typing import Any, Callable, Dict, List, Optional, Type

__all__ = ('EventNamespace', 'EventDispatcher', 'EventDefinition')

logger = logging.getLogger(__name__)

Listener = Callable[..., Any]


class EventDefinition:
    """Marker base of event payload classes."""


class EventNamespace:
    """Collects the :class:`EventDefinition` subclasses declared in a
    subclass body, inherited namespaces included.

    Attributes
        __events__: dict[str, type[EventDefinition]]
            Event classes keyed by attribute name.
    """
    __events__: Dict[str, Type[EventDefinition]] = {}

    def __init_subclass__(cls):
        events: Dict[str, Type[EventDefinition]] = {}
        for base in reversed(cls.__mro__[1:]):
            if issubclass(base, EventNamespace):
                events.update(base.__events__)

        events.update({
            name: attr for name, attr in vars(cls).items()
            if isinstance(attr, type) and issubclass(attr, EventDefinition)
        })
        cls.__events__ = events


class EventDispatcher:
    """Synchronous publish/subscribe for training progress.

    Listeners run in registration order on the dispatching thread, an
    exception raised by a listener propagates to the caller of
    :meth:`dispatch`.

    Attributes
        events: Type[EventNamespace]
            The events this dispatcher knows how to build.

    Example::

        class Events(EventNamespace):

            @dataclass
            class epoch_completed(EventDefinition):
                dispatcher: EventDispatcher
                epoch: int


        class Dispatcher(EventDispatcher):
            events = Events


        dispatcher = Dispatcher()


        @dispatcher.on()
        def epoch_completed(evnt: Events.epoch_completed) -> None:
            print(f'Finished epoch {evnt.epoch}')


        dispatcher.dispatch('epoch_completed', 10)

    .. note::
        Event names are case insensitive
    """
    events: Type[EventNamespace] = EventNamespace

    def __init__(self) -> None:
        self._listeners: Dict[str, List[Listener]] = {}
        self._subscribers: List[EventDispatcher] = []

    def register_listener(self, name: str, callback: Listener) -> None:
        """Adds `callback` to the listeners of event `name`.

        Arguments
            name: str
                The event name.

            callback: Callable[..., Any]
                Called with the event instance, or with the raw
                arguments for events missing from :attr:`events`.
        """
        self._listeners.setdefault(name.lower(), []).append(callback)

    def remove_listener(self, name: str, callback: Listener) -> None:
        listeners = self._listeners.get(name.lower(), [])
        if callback in listeners:
            listeners.remove(callback)

    def run_callbacks(self, name: str, *args: Any) -> None:
        """Calls the listeners of `name`, then forwards to every
        subscribed dispatcher."""
        name = name.lower()
        for listener in list(self._listeners.get(name, ())):
            listener(*args)

        for subscriber in self._subscribers:
            subscriber.run_callbacks(name, *args)

    def dispatch(self, name: str, *args: Any) -> Optional[EventDefinition]:
        """Builds the event `name` from `args` and runs its listeners.

        Returns
            Optional[EventDefinition]
                The built event, None when `name` is not part of
                :attr:`events` (listeners then receive `args` unchanged).
        """
        event = self.events.__events__.get(name.lower())
        if event is None:
            logger.debug('Dispatching undefined event %r', name)
            self.run_callbacks(name, *args)
            return None

        instance = event(self, *args)
        self.run_callbacks(name, instance)
        return instance

    def subscribe(self, dispatcher: EventDispatcher) -> None:
        """Receives every event `dispatcher` dispatches from now on."""
        dispatcher._subscribers.append(self)

    def unsubscribe(self, dispatcher: EventDispatcher) -> None:
        dispatcher._subscribers.remove(self)

    def on(self, name: Optional[str] = None):
        """Decorator form of :meth:`register_listener`, the function
        name is the event name unless `name` is given."""
        def wrapped(func: Listener) -> Listener:
            self.register_listener(name or func.__name__, func)
            return func
        return wrapped

    def once(self, name: Optional[str] = None):
        """Like :meth:`on`, but the listener is removed before its first
        call."""
        def wrapped(func: Listener) -> Listener:
            event_name = (name or func.__name__).lower()

            @functools.wraps(func)
            def callback(*args: Any) -> Any:
                self.remove_listener(event_name, callback)
                return func(*args)

            self.register_listener(event_name, callback)
            return func
        return wrapped
