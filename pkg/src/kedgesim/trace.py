"""Execution traces: replayed from files or generated as seeded random walks.

Generated walks use an explicit SplitMix64 generator rather than the
platform RNG so that a (cfg, seed, max_steps) triple produces the same
trace on every platform, forever. Branches are chosen by cumulative
probability inversion over the out-edges sorted by destination id.

Trace file format: one block id per line ('B3' or '3'), '#' comments.
The writer adds a header comment with the generation parameters when the
trace was generated.
"""

from dataclasses import dataclass

from .cfg import BlockId, Cfg, validate_cfg

_MASK64 = (1 << 64) - 1


class TraceParseError(ValueError):
    """Malformed trace file; the message carries the offending line number."""


class SplitMix64:
    """SplitMix64: 64-bit state advanced by a golden-ratio increment,
    output mixed by xor-shift-multiply. Small, fast, and portable."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        # 53 significant bits, uniform in [0, 1)
        return (self.next_u64() >> 11) * (2.0 ** -53)


@dataclass
class Trace:
    steps: tuple[BlockId, ...]
    source: str = "replayed"  # "replayed" | "generated"
    seed: int | None = None
    max_steps: int | None = None
    truncated: bool = False  # generated walk hit max_steps before the exit


@dataclass
class TraceReport:
    violations: list[tuple[int, str]]  # (step index, message)

    @property
    def ok(self) -> bool:
        return not self.violations


def generate_trace(cfg: Cfg, seed: int, max_steps: int) -> Trace:
    """Random walk from the entry block, stopping at the exit block or
    after max_steps blocks, whichever comes first."""
    report = validate_cfg(cfg)
    if not report.ok:
        raise ValueError("invalid cfg: " + "; ".join(report.violations))
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")

    rng = SplitMix64(seed)
    steps = [cfg.entry]
    while steps[-1] != cfg.exit and len(steps) < max_steps:
        outs = cfg.out_edges(steps[-1])
        r = rng.next_float()
        cum = 0.0
        chosen = outs[-1]  # float dust guard: the last edge absorbs r ~ 1
        for e in outs:
            cum += e.prob
            if r < cum:
                chosen = e
                break
        steps.append(chosen.dst)
    return Trace(
        steps=tuple(steps),
        source="generated",
        seed=seed,
        max_steps=max_steps,
        truncated=steps[-1] != cfg.exit,
    )


def validate_trace(cfg: Cfg, trace: Trace) -> TraceReport:
    """Check the trace against the graph; every violation is listed with
    the step index where it occurs. A trace that stops before the exit is
    legal (truncated), not a violation."""
    v: list[tuple[int, str]] = []
    steps = trace.steps
    if not steps:
        return TraceReport([(0, "trace is empty")])
    for i, b in enumerate(steps):
        if b not in cfg.blocks:
            v.append((i, f"unknown block B{b}"))
    if steps[0] != cfg.entry:
        v.append((0, f"does not start at entry B{cfg.entry}"))
    for i in range(len(steps) - 1):
        src, dst = steps[i], steps[i + 1]
        if src not in cfg.blocks or dst not in cfg.blocks:
            continue
        if not any(e.dst == dst for e in cfg.out_edges(src)):
            v.append((i + 1, f"no edge B{src} -> B{dst}"))
    return TraceReport(v)


def serialize_trace(trace: Trace) -> str:
    lines = []
    if trace.source == "generated":
        lines.append(f"# generated seed={trace.seed} max_steps={trace.max_steps}")
        if trace.truncated:
            lines.append("# truncated before reaching the exit block")
    lines.extend(f"B{b}" for b in trace.steps)
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> Trace:
    steps: list[BlockId] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 1:
            raise TraceParseError(f"line {lineno}: expected one block id, got {line!r}")
        t = tok[0]
        body = t[1:] if t[:1] in ("B", "b") else t
        if not body.isdigit():
            raise TraceParseError(f"line {lineno}: invalid block id {t!r}")
        steps.append(int(body))
    return Trace(steps=tuple(steps), source="replayed")
