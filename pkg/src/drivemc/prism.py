"""Model-checker DTMC source emission plus an in-repo round-trip oracle.

The emitted model is a step-indexed absorbing chain over two variables:
step in [0..3] (0 = before scene 1, absorbing at 3) and s in [0..2]
(0 = takeover, 1 = alert, 2 = normal). Probabilities are printed at six
decimals, half-up, and each command's rounding residual is folded into its
lexicographically last nonzero branch so the printed row sums to exactly
1.000000.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .chain import ChainModel
from .errors import PrismParseError, UndefinedRowError
from .simulate import propagate
from .types import DriverState, STATES

_MILLION = 10**6


def _millionths(value: Fraction) -> int:
    return (2 * _MILLION * value.numerator + value.denominator) // (
        2 * value.denominator
    )


def _format_millionths(m: int) -> str:
    return f"{m // _MILLION}.{m % _MILLION:06d}"


def _branches(probs, next_step: int) -> str:
    """Branches in increasing s', residual folded into the last nonzero one."""
    positive = [(s, p) for s, p in enumerate(probs) if p > 0]
    printed = [_millionths(p) for _, p in positive]
    residual = _MILLION - sum(printed)
    printed[-1] += residual
    parts = [
        f"{_format_millionths(m)} : (step'={next_step})&(s'={s})"
        for (s, _), m in zip(positive, printed)
    ]
    return " + ".join(parts)


def export_dtmc(chain: ChainModel) -> str:
    """Render the chain as deterministic DTMC source text."""
    marginals = propagate(chain)  # also rejects reachable undefined rows
    lines = [
        "dtmc",
        "",
        "module driver",
        "  step : [0..3] init 0;",
        "  s : [0..2] init 2;",
        "",
        f"  [] step=0 & s=2 -> {_branches(chain.initial, 1)};",
    ]
    for step_number, matrix in enumerate(chain.steps, start=1):
        occupancy = marginals[step_number - 1]
        for origin in STATES:
            if occupancy[origin] == 0:
                continue
            row = matrix.row(origin)
            if row is None:
                raise UndefinedRowError(
                    f"step {matrix.step} row {origin.wire} is undefined but reachable"
                )
            lines.append(
                f"  [] step={step_number} & s={int(origin)} -> "
                f"{_branches(row, step_number + 1)};"
            )
    lines.append("  [] step=3 -> 1.000000 : (step'=3)&(s'=s);")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def export_properties(chain: ChainModel) -> str:
    """The fixed PCTL template set: 1 + 9 + 1 reachability/safety queries."""
    lines = ["P=? [ F (step=3 & s=0) ]"]
    for step in (1, 2, 3):
        for s in range(3):
            lines.append(f"P=? [ F (step={step} & s={s}) ]")
    lines.append("P=? [ G (s!=0) ]")
    return "\n".join(lines) + "\n"


def evaluate_property(chain: ChainModel, line: str) -> Fraction:
    """Evaluate one emitted property line by exact propagation."""
    marginals = propagate(chain)
    reach = re.fullmatch(r"P=\? \[ F \(step=(\d) & s=(\d)\) \]", line.strip())
    if reach:
        step, s = int(reach.group(1)), int(reach.group(2))
        if not (1 <= step <= 3 and 0 <= s <= 2):
            raise PrismParseError(f"property out of range: {line!r}")
        return marginals[step - 1].probs[s]
    if line.strip() == "P=? [ G (s!=0) ]":
        return _never_takeover(chain)
    raise PrismParseError(f"unrecognized property: {line!r}")


def _never_takeover(chain: ChainModel) -> Fraction:
    # Mass that survives all three scenes without touching s=0.
    alive = list(chain.initial)
    alive[0] = Fraction(0)
    for matrix in chain.steps:
        nxt = [Fraction(0)] * 3
        for origin in (DriverState.ALERT, DriverState.NORMAL):
            mass = alive[int(origin)]
            if mass == 0:
                continue
            row = matrix.row(origin)
            if row is None:
                raise UndefinedRowError(
                    f"step {matrix.step} row {origin.wire} is undefined but reachable"
                )
            for dest in (1, 2):
                nxt[dest] += mass * row[dest]
        alive = nxt
    return alive[1] + alive[2]


# --------------------------------------------------------------------------
# Mini-parser and self check

_COMMAND = re.compile(
    r"^\s*\[\]\s*step=(\d)(?:\s*&\s*s=(\d))?\s*->\s*(.+);\s*$"
)
_BRANCH = re.compile(
    r"^\s*([0-9]+\.[0-9]{6})\s*:\s*\(step'=(\d)\)&\(s'=(\d|s)\)\s*$"
)


@dataclass(frozen=True, slots=True)
class ParsedCommand:
    step: int
    s: Optional[int]
    branches: tuple[tuple[int, Optional[int], Fraction], ...]  # (step', s', prob)


def parse_dtmc(text: str) -> tuple[ParsedCommand, ...]:
    """Re-parse emitted DTMC text; raises PrismParseError on any deviation."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise PrismParseError("empty model text")
    if lines[0].strip() != "dtmc":
        raise PrismParseError("model must start with the dtmc header")
    commands = []
    for line in lines[1:]:
        stripped = line.strip()
        if stripped in ("module driver", "endmodule"):
            continue
        if re.fullmatch(r"(step|s) : \[\d\.\.\d\] init \d;", stripped):
            continue
        match = _COMMAND.match(line)
        if not match:
            raise PrismParseError(f"unparseable line: {line!r}")
        step = int(match.group(1))
        s = int(match.group(2)) if match.group(2) is not None else None
        if not 0 <= step <= 3 or (s is not None and not 0 <= s <= 2):
            raise PrismParseError(f"guard out of declared ranges in line {line!r}")
        branches = []
        total = Fraction(0)
        for part in match.group(3).split(" + "):
            branch = _BRANCH.match(part)
            if not branch:
                raise PrismParseError(f"unparseable branch {part!r} in line {line!r}")
            prob = Fraction(branch.group(1))
            target_step = int(branch.group(2))
            target_s = None if branch.group(3) == "s" else int(branch.group(3))
            if not 0 <= target_step <= 3 or (target_s is not None and not 0 <= target_s <= 2):
                raise PrismParseError(f"branch target out of declared ranges in line {line!r}")
            branches.append((target_step, target_s, prob))
            total += prob
        if total != 1:
            raise PrismParseError(
                f"branches of guard step={step}"
                + (f" & s={s}" if s is not None else "")
                + f" sum to {total}, not 1"
            )
        commands.append(ParsedCommand(step=step, s=s, branches=tuple(branches)))
    if not commands:
        raise PrismParseError("no commands found")
    return tuple(commands)


@dataclass(frozen=True, slots=True)
class SelfCheckReport:
    ok: bool
    mismatches: tuple[str, ...]
    max_error: float


def self_check(dtmc_text: str, chain: ChainModel, tolerance: float = 5e-7) -> SelfCheckReport:
    """Re-parse emitted text, re-propagate, and compare against the chain.

    Every scene/state marginal implied by the parsed commands must match
    exact propagation within the printing granularity; each emitted property
    template is evaluated both ways as well.
    """
    commands = parse_dtmc(dtmc_text)
    by_guard: dict[tuple[int, Optional[int]], ParsedCommand] = {}
    for command in commands:
        key = (command.step, command.s)
        if key in by_guard:
            raise PrismParseError(f"duplicate guard step={command.step} s={command.s}")
        by_guard[key] = command

    # Forward propagation over the parsed (step, s) graph, starting at (0, 2).
    dist: dict[int, Fraction] = {2: Fraction(1)}
    parsed_marginals: list[dict[int, Fraction]] = []
    for step in range(3):
        nxt: dict[int, Fraction] = {}
        for s, mass in dist.items():
            command = by_guard.get((step, s)) or by_guard.get((step, None))
            if command is None:
                raise PrismParseError(f"no command covers step={step} s={s}")
            for target_step, target_s, prob in command.branches:
                if target_step != step + 1:
                    raise PrismParseError(
                        f"command at step={step} jumps to step={target_step}"
                    )
                landing = s if target_s is None else target_s
                nxt[landing] = nxt.get(landing, Fraction(0)) + mass * prob
        dist = nxt
        parsed_marginals.append(dist)

    exact = propagate(chain)
    mismatches = []
    max_error = 0.0
    for scene, (parsed, reference) in enumerate(zip(parsed_marginals, exact), start=1):
        for s in range(3):
            got = float(parsed.get(s, Fraction(0)))
            want = float(reference.probs[s])
            err = abs(got - want)
            max_error = max(max_error, err)
            if err > tolerance:
                mismatches.append(
                    f"scene {scene} state s={s}: parsed {got:.7f}, exact {want:.7f}"
                )
    return SelfCheckReport(
        ok=not mismatches,
        mismatches=tuple(mismatches),
        max_error=max_error,
    )
