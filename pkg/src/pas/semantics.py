"""The single definition of what one TAS workflow invocation does.

The workflow is a small tree of nodes. A ``Choice`` routes on a split
parameter; a ``Step`` runs one abstract operation by trying its bound
alternatives. The Markov-chain builder, the statistical engine and the
environment simulator all interpret this same tree.

Every random decision owns a fixed *slot*: one per choice node and one per
(step, attempt index). Statistical estimation draws a uniform per slot, which
lets several configurations share one sample matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from .model import Configuration, ModelError, ServiceKey, ServiceType, WorkflowSpec

P_VITAL = "p_vital"
P_DRUG = "p_drug"


@dataclass(frozen=True)
class Step:
    name: str
    op: ServiceType
    fatal: bool
    next: Optional["Node"]


@dataclass(frozen=True)
class Choice:
    name: str
    param: str
    yes: "Node"
    no: "Node"


Node = Union[Step, Choice]


def workflow_graph(workflow: WorkflowSpec) -> Choice:
    """Root of the TAS tree.

    vital -> MedicalAnalysis -> (Drug | Alarm); emergency -> Alarm. When the
    InformRelatives operation is enabled it follows every successful Alarm and
    never fails the workflow.
    """
    inform = Step("IR", ServiceType.INFORM_RELATIVES, False, None) if workflow.inform_relatives_enabled else None
    drug = Step("D", ServiceType.DRUG, True, None)
    alarm_vital = Step("A_v", ServiceType.ALARM, True, inform)
    alarm_emergency = Step("A_e", ServiceType.ALARM, True, inform)
    analysis = Choice("analysis", P_DRUG, drug, alarm_vital)
    medical = Step("M", ServiceType.MEDICAL_ANALYSIS, True, analysis)
    return Choice("request", P_VITAL, medical, alarm_emergency)


def iter_nodes(root: Node):
    """Nodes in depth-first order, each shared node once."""
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if node is None or node.name in seen:
            continue
        seen.add(node.name)
        yield node
        if isinstance(node, Choice):
            stack.append(node.no)
            stack.append(node.yes)
        else:
            stack.append(node.next)


@dataclass(frozen=True)
class SlotLayout:
    """Column offsets of every random decision in a sample row."""

    offsets: dict
    width: int
    depth: int

    @classmethod
    def for_graph(cls, root: Node, depth: int, ir_depth: int = 1) -> "SlotLayout":
        offsets = {}
        pos = 0
        for node in iter_nodes(root):
            offsets[node.name] = pos
            if isinstance(node, Choice):
                pos += 1
            elif node.op is ServiceType.INFORM_RELATIVES:
                pos += ir_depth
            else:
                pos += depth
        return cls(offsets, pos, depth)

    @classmethod
    def for_config(cls, root: Node, config: Configuration) -> "SlotLayout":
        ir = config.get(ServiceType.INFORM_RELATIVES, ())
        return cls.for_graph(root, config.depth(), max(1, len(ir)))


def bound_services(config: Configuration, op: ServiceType) -> tuple[ServiceKey, ...]:
    ids = config.get(op)
    if ids is None:
        raise ModelError(f"configuration has no binding for {op.value}")
    return tuple(ServiceKey(op, i) for i in ids)


def check_bindings(root: Node, config: Configuration) -> None:
    for node in iter_nodes(root):
        if isinstance(node, Step):
            bound_services(config, node.op)


StepRecord = tuple  # (operation, ServiceKey, succeeded, cost charged)


def walk(
    root: Node,
    config: Configuration,
    rate: Callable[[ServiceKey], float],
    cost: Callable[[ServiceKey], float],
    split: Callable[[str], float],
    draw: Callable[[int], float],
    layout: SlotLayout | None = None,
    steps: list | None = None,
) -> tuple[bool, float]:
    """Run one invocation; returns (workflow_failed, total_cost).

    ``draw(slot)`` yields a uniform in [0, 1). A choice takes its ``yes`` branch
    when the draw is below the split parameter; an attempt fails when the draw
    is below the service's failure rate. Step records are appended to ``steps``
    when given.
    """
    total = 0.0
    node = root
    while node is not None:
        if isinstance(node, Choice):
            slot = layout.offsets[node.name] if layout else 0
            node = node.yes if draw(slot) < split(node.param) else node.no
            continue
        base = layout.offsets[node.name] if layout else 0
        services = bound_services(config, node.op)
        ok = False
        if node.op in config.parallel:
            for i, key in enumerate(services):
                c = cost(key)
                total += c
                success = not (draw(base + i) < rate(key))
                ok = ok or success
                if steps is not None:
                    steps.append((node.op, key, success, c))
        else:
            for i, key in enumerate(services):
                c = cost(key)
                total += c
                success = not (draw(base + i) < rate(key))
                if steps is not None:
                    steps.append((node.op, key, success, c))
                if success:
                    ok = True
                    break
        if not ok and node.fatal:
            return True, total
        node = node.next
    return False, total
