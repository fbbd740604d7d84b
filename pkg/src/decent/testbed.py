"""Quick construction of attested components outside the scenario simulator."""

from __future__ import annotations

import random

from .authlist import DECENT_SERVER, AuthList, AuthListEntry
from .component import ComponentContext, component_init
from .ias import AttestationService
from .platform import AttestationGroup, Platform, SimClock, enclave_code
from .server import DecentServer


class Testbed:
    """A seeded collection of platforms, one Decent Server per platform, and an IAS.

    >>> tb = Testbed(seed=1)
    >>> ctx = tb.component("AppA", tb.authlist(("AppA", "A")), "p0")
    """

    __test__ = False  # not a pytest class

    def __init__(self, seed: int = 0, clock: SimClock | None = None, server_code: str = "DecentServer"):
        self.rng = random.Random(seed)
        self.clock = clock or SimClock()
        self.ias = AttestationService(self._sub_rng(), self.clock)
        self.group = AttestationGroup("g0", self._sub_rng())
        self.server_code = server_code
        self.platforms: dict[str, Platform] = {}
        self.servers: dict[str, DecentServer] = {}

    def _sub_rng(self) -> random.Random:
        return random.Random(self.rng.getrandbits(64))

    def platform(self, name: str) -> Platform:
        if name not in self.platforms:
            p = Platform(name, self.group, self.clock, self._sub_rng())
            self.ias.provision(p)
            self.platforms[name] = p
            self.servers[name] = DecentServer(p.load_enclave(enclave_code(self.server_code), name), self.ias)
        return self.platforms[name]

    def server(self, platform: str) -> DecentServer:
        self.platform(platform)
        return self.servers[platform]

    def authlist(self, *pairs: tuple[str, str]) -> AuthList:
        """An AuthList with the Decent Server plus ``(code name, service)`` pairs."""
        pairs = [(self.server_code, DECENT_SERVER), *pairs]
        return AuthList(AuthListEntry(enclave_code(code).measurement, service) for code, service in pairs)

    def component(self, code: str, authlist: AuthList, platform: str, **kwargs) -> ComponentContext:
        p = self.platform(platform)
        enclave = p.load_enclave(enclave_code(code), platform)
        kwargs.setdefault("name", f"{code}@{platform}")
        return component_init(enclave, authlist, self.servers[platform], **kwargs)
