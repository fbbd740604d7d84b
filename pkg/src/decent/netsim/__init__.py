"""Deterministic network/host simulator with a programmable adversary."""

from .events import Accepted, Established, Event, EventLog, Rejected, Revoked, Sent, ShutDown, check_authenticity
from .knowledge import KnowledgeSet
from .scenario import ScenarioError, ScenarioResult, build_world, builtin_names, load, run_scenario
from .world import (
    Adversary,
    FrameEvent,
    SimWorld,
    adversary_leak_component_key,
    assert_authenticity,
    assert_secrecy,
    match_rule,
    world_build,
)

__all__ = [
    "Accepted",
    "Adversary",
    "Established",
    "Event",
    "EventLog",
    "FrameEvent",
    "KnowledgeSet",
    "Rejected",
    "Revoked",
    "ScenarioError",
    "ScenarioResult",
    "Sent",
    "ShutDown",
    "SimWorld",
    "adversary_leak_component_key",
    "assert_authenticity",
    "assert_secrecy",
    "build_world",
    "builtin_names",
    "check_authenticity",
    "load",
    "match_rule",
    "run_scenario",
    "world_build",
]
