"""Datagram transports: a simulated link adapter and a UDP socket adapter.

Both expose ``send(data)`` and ``poll(now_ns)``; session endpoints only see
this surface, so the same sender/receiver code runs over either one.
"""

from __future__ import annotations

import errno
import socket
import time
from collections import deque
from enum import Enum
from typing import Callable, Protocol

from .netsim import EventLoop, Link, LinkConfig

MAX_DATAGRAM = 65507


class TransportMode(str, Enum):
    SIMULATED = "sim"
    DATAGRAM = "udp"


class TransportError(OSError):
    pass


class OversizedDatagram(TransportError, ValueError):
    pass


class SocketUnavailable(TransportError):
    pass


class Transport(Protocol):
    mode: TransportMode

    def send(self, data: bytes) -> None: ...

    def poll(self, now_ns: int) -> list[tuple[bytes, int]]: ...


def _check_size(data: bytes) -> None:
    if len(data) > MAX_DATAGRAM:
        raise OversizedDatagram(f"{len(data)} B exceeds the {MAX_DATAGRAM} B UDP payload limit")


class SimNetwork:
    """Forward and reverse links shared by every endpoint of one simulation.

    Datagrams are tagged with the destination endpoint name; arrival pushes
    them into that endpoint's inbox and fires its listener, if any.
    """

    def __init__(self, loop: EventLoop, forward: LinkConfig, reverse: LinkConfig | None = None):
        self.loop = loop
        self.forward = Link(loop, forward, self._deliver, name="forward")
        if reverse is None:
            reverse = LinkConfig(**{**forward.__dict__, "seed": forward.seed + 1})
        self.reverse = Link(loop, reverse, self._deliver, name="reverse")
        self.endpoints: dict[str, SimulatedTransport] = {}

    def endpoint(self, name: str, peer: str, *, direction: str = "forward") -> SimulatedTransport:
        link = self.forward if direction == "forward" else self.reverse
        ep = SimulatedTransport(link, name, peer)
        self.endpoints[name] = ep
        return ep

    def _deliver(self, tagged: tuple[str, bytes], arrival_ns: int) -> None:
        dest, data = tagged
        ep = self.endpoints[dest]
        ep.inbox.append((data, arrival_ns))
        if ep.listener is not None:
            ep.listener(arrival_ns)


class SimulatedTransport:
    mode = TransportMode.SIMULATED

    def __init__(self, link: Link, name: str, peer: str) -> None:
        self.link = link
        self.name = name
        self.peer = peer
        self.inbox: deque[tuple[bytes, int]] = deque()
        self.listener: Callable[[int], None] | None = None

    def send(self, data: bytes) -> None:
        _check_size(data)
        self.link.send((self.peer, bytes(data)), len(data) + self.link.config.overhead_bytes)

    def poll(self, now_ns: int) -> list[tuple[bytes, int]]:
        out = []
        while self.inbox and self.inbox[0][1] <= now_ns:
            out.append(self.inbox.popleft())
        return out


class DatagramTransport:
    """Non-blocking UDP socket bound to ``local`` and sending to ``remote``.

    Receive times come from ``clock_ns`` (monotonic by default) at the moment
    each datagram is read off the socket.
    """

    mode = TransportMode.DATAGRAM

    def __init__(
        self,
        local: tuple[str, int],
        remote: tuple[str, int] | None = None,
        *,
        clock_ns: Callable[[], int] = time.monotonic_ns,
        rcvbuf: int = 4 << 20,
    ) -> None:
        try:
            self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, rcvbuf)
            self.sock.bind(local)
            self.sock.setblocking(False)
        except OSError as exc:
            raise SocketUnavailable(f"cannot bind UDP socket on {local}: {exc}") from exc
        self.remote = remote
        self.clock_ns = clock_ns

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def fileno(self) -> int:
        return self.sock.fileno()

    def send(self, data: bytes) -> None:
        _check_size(data)
        if self.remote is None:
            raise SocketUnavailable("no remote address configured")
        try:
            self.sock.sendto(data, self.remote)
        except BlockingIOError:
            # loopback send buffer full: the datagram is lost, as on a real link
            pass
        except OSError as exc:
            raise SocketUnavailable(str(exc)) from exc

    def poll(self, now_ns: int | None = None) -> list[tuple[bytes, int]]:
        out = []
        while True:
            try:
                data = self.sock.recv(MAX_DATAGRAM + 1)
            except BlockingIOError:
                break
            except OSError as exc:
                if exc.errno in (errno.ECONNREFUSED, errno.EAGAIN):
                    break
                raise SocketUnavailable(str(exc)) from exc
            out.append((data, self.clock_ns()))
        return out

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> DatagramTransport:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def udp_pair(
    host: str = "127.0.0.1", *, clock_ns: Callable[[], int] = time.monotonic_ns
) -> tuple[DatagramTransport, DatagramTransport]:
    """Two connected loopback endpoints on ephemeral ports."""
    a = DatagramTransport((host, 0), clock_ns=clock_ns)
    b = DatagramTransport((host, 0), a.address, clock_ns=clock_ns)
    a.remote = b.address
    return a, b
