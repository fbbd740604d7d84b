"""A small discrete-event core: a time-ordered callback queue plus FIFO servers.

Servers use the Lindley recursion: because jobs reach a server in
nondecreasing time order (they arrive from inside event callbacks), the
finish time of a FIFO job is known the moment it arrives. That keeps every
service step down to one heap operation.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from typing import Callable


class Sim:
    def __init__(self):
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()

    def at(self, t: float, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (t, next(self._seq), fn, args))

    def after(self, dt: float, fn: Callable, *args) -> None:
        self.at(self.now + dt, fn, *args)

    def run(self, until: float) -> None:
        q = self._queue
        pop = heapq.heappop
        while q and q[0][0] <= until:
            t, _, fn, args = pop(q)
            self.now = t
            fn(*args)
        self.now = max(self.now, until)


class FifoServer:
    """``servers`` identical servers sharing one FIFO queue."""

    def __init__(self, sim: Sim, servers: int = 1):
        self.sim = sim
        self._free = [0.0] * servers
        self.busy_time = 0.0
        self.jobs = 0

    def finish_time(self, service: float) -> float:
        start = max(self.sim.now, self._free[0])
        end = start + service
        heapq.heapreplace(self._free, end)
        self.busy_time += service
        self.jobs += 1
        return end

    def serve(self, service: float, then: Callable, *args) -> None:
        self.sim.at(self.finish_time(service), then, *args)


class TimeSlicedCpu(FifoServer):
    """One core shared round-robin: jobs longer than ``quantum`` rejoin the queue after each slice.

    This approximates an OS scheduler time-slicing threads, so a long
    handshake does not hold up the short requests queued behind it.
    """

    def __init__(self, sim: Sim, quantum: float = 0.0005):
        super().__init__(sim, 1)
        self.quantum = quantum

    def serve(self, service: float, then: Callable, *args) -> None:
        if service <= self.quantum:
            self.sim.at(self.finish_time(service), then, *args)
        else:
            end = self.finish_time(self.quantum)
            self.sim.at(end, self.serve, service - self.quantum, then, *args)


class Pool:
    """Counting semaphore with FIFO hand-off (a fixed-size thread pool)."""

    def __init__(self, size: int):
        self.size = size
        self.free = size
        self._waiting: deque = deque()
        self.max_waiting = 0

    def acquire(self, then: Callable, *args) -> None:
        if self.free > 0:
            self.free -= 1
            then(*args)
        else:
            self._waiting.append((then, args))
            self.max_waiting = max(self.max_waiting, len(self._waiting))

    def release(self) -> None:
        if self._waiting:
            then, args = self._waiting.popleft()
            then(*args)
        else:
            self.free += 1
