"""Control flow graphs over basic blocks, with the lookahead queries used
by the compression policies.

A program is modeled as basic blocks (byte sizes in compressed and
uncompressed form, plus a per-execution cycle cost) connected by directed
branch edges. Each edge carries a branch probability so that traces can be
generated and likely successors predicted. One entry block and one exit
block are designated; the exit has no out-edges.

File format (line oriented, UTF-8, '#' starts a comment):

    block <id> usize=<bytes> csize=<bytes> cycles=<n>
    edge <src> -> <dst> p=<decimal>
    entry <id>
    exit <id>
    uniform-probs          # optional: edges may omit p=, default 1/out-degree

Block ids are non-negative integers, written either bare (``3``) or with a
``B`` prefix (``B3``). The canonical serializer emits blocks sorted by id,
then edges sorted by (src, dst), then the entry and exit lines.
"""

import re
from collections import deque
from dataclasses import dataclass, field

BlockId = int

# Branch probabilities come from decimal literals, so sums are checked
# against 1 with this slack rather than exactly.
PROB_TOL = 1e-9


class CfgParseError(ValueError):
    """Malformed CFG file; the message carries the offending line number."""


@dataclass
class BasicBlock:
    id: BlockId
    uncompressed_size: int
    compressed_size: int
    exec_cycles: int


@dataclass
class Edge:
    src: BlockId
    dst: BlockId
    prob: float


@dataclass
class Cfg:
    """A validated-on-demand control flow graph.

    Treated as immutable after construction; nothing in this package
    mutates a Cfg, so instances are safe to share.
    """

    blocks: dict[BlockId, BasicBlock]
    edges: list[Edge]
    entry: BlockId
    exit: BlockId
    _adj: dict[BlockId, list[Edge]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        adj: dict[BlockId, list[Edge]] = {b: [] for b in self.blocks}
        for e in self.edges:
            if e.src in adj:
                adj[e.src].append(e)
        for lst in adj.values():
            lst.sort(key=lambda e: e.dst)  # fixed order; determinizes choices
        self._adj = adj

    def block(self, b: BlockId) -> BasicBlock:
        return self.blocks[b]

    def out_edges(self, u: BlockId) -> list[Edge]:
        """Out-edges of u, sorted by destination id."""
        try:
            return self._adj[u]
        except KeyError:
            raise ValueError(f"unknown block B{u}") from None


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


_ID_RE = re.compile(r"^[Bb]?(\d+)$")


def _parse_id(tok: str, lineno: int) -> BlockId:
    m = _ID_RE.match(tok)
    if not m:
        raise CfgParseError(f"line {lineno}: invalid block id {tok!r}")
    return int(m.group(1))


def _parse_kv(tok: str, key: str, lineno: int) -> str:
    if not tok.startswith(key + "="):
        raise CfgParseError(f"line {lineno}: expected {key}=<value>, got {tok!r}")
    return tok[len(key) + 1 :]


def parse_cfg(text: str) -> Cfg:
    """Parse CFG file contents into a Cfg.

    Only structural problems are rejected here (syntax, duplicate ids,
    references to undeclared blocks, missing or repeated entry/exit).
    Everything else is left to validate_cfg so that a report can list all
    violations at once.
    """
    blocks: dict[BlockId, BasicBlock] = {}
    raw_edges: list[tuple[int, BlockId, BlockId, float | None]] = []
    entry: BlockId | None = None
    exit_: BlockId | None = None
    uniform = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kind = toks[0]
        if kind == "block":
            if len(toks) != 5:
                raise CfgParseError(f"line {lineno}: block takes <id> usize= csize= cycles=")
            bid = _parse_id(toks[1], lineno)
            if bid in blocks:
                raise CfgParseError(f"line {lineno}: duplicate block id B{bid}")
            try:
                usize = int(_parse_kv(toks[2], "usize", lineno))
                csize = int(_parse_kv(toks[3], "csize", lineno))
                cycles = int(_parse_kv(toks[4], "cycles", lineno))
            except ValueError as err:
                raise CfgParseError(f"line {lineno}: {err}") from None
            blocks[bid] = BasicBlock(bid, usize, csize, cycles)
        elif kind == "edge":
            if len(toks) not in (4, 5) or toks[2] != "->":
                raise CfgParseError(f"line {lineno}: edge takes <src> -> <dst> [p=<decimal>]")
            src = _parse_id(toks[1], lineno)
            dst = _parse_id(toks[3], lineno)
            prob: float | None = None
            if len(toks) == 5:
                try:
                    prob = float(_parse_kv(toks[4], "p", lineno))
                except ValueError as err:
                    raise CfgParseError(f"line {lineno}: {err}") from None
            raw_edges.append((lineno, src, dst, prob))
        elif kind == "entry":
            if len(toks) != 2:
                raise CfgParseError(f"line {lineno}: entry takes one block id")
            if entry is not None:
                raise CfgParseError(f"line {lineno}: entry declared more than once")
            entry = _parse_id(toks[1], lineno)
        elif kind == "exit":
            if len(toks) != 2:
                raise CfgParseError(f"line {lineno}: exit takes one block id")
            if exit_ is not None:
                raise CfgParseError(f"line {lineno}: exit declared more than once")
            exit_ = _parse_id(toks[1], lineno)
        elif kind == "uniform-probs":
            if len(toks) != 1:
                raise CfgParseError(f"line {lineno}: uniform-probs takes no arguments")
            uniform = True
        else:
            raise CfgParseError(f"line {lineno}: unknown directive {kind!r}")

    if entry is None:
        raise CfgParseError("missing entry declaration")
    if exit_ is None:
        raise CfgParseError("missing exit declaration")
    for ref, what in ((entry, "entry"), (exit_, "exit")):
        if ref not in blocks:
            raise CfgParseError(f"{what} references unknown block B{ref}")

    out_degree: dict[BlockId, int] = {}
    for _, src, _, _ in raw_edges:
        out_degree[src] = out_degree.get(src, 0) + 1

    edges: list[Edge] = []
    for lineno, src, dst, prob in raw_edges:
        for ref in (src, dst):
            if ref not in blocks:
                raise CfgParseError(f"line {lineno}: edge references unknown block B{ref}")
        if prob is None:
            if not uniform:
                raise CfgParseError(f"line {lineno}: edge probability p= is required")
            prob = 1.0 / out_degree[src]
        edges.append(Edge(src, dst, prob))

    return Cfg(blocks=blocks, edges=edges, entry=entry, exit=exit_)


def serialize_cfg(cfg: Cfg) -> str:
    """Emit the canonical file form: blocks by id, edges by (src, dst)."""
    lines = []
    for b in sorted(cfg.blocks.values(), key=lambda b: b.id):
        lines.append(
            f"block B{b.id} usize={b.uncompressed_size} "
            f"csize={b.compressed_size} cycles={b.exec_cycles}"
        )
    for e in sorted(cfg.edges, key=lambda e: (e.src, e.dst)):
        lines.append(f"edge B{e.src} -> B{e.dst} p={e.prob!r}")
    lines.append(f"entry B{cfg.entry}")
    lines.append(f"exit B{cfg.exit}")
    return "\n".join(lines) + "\n"


def validate_cfg(cfg: Cfg) -> ValidationReport:
    """Check every structural invariant; all violations are reported, none
    short-circuits the rest."""
    v: list[str] = []

    for b in sorted(cfg.blocks.values(), key=lambda b: b.id):
        if b.uncompressed_size <= 0:
            v.append(f"block B{b.id}: uncompressed size {b.uncompressed_size} must be > 0")
        if b.compressed_size <= 0:
            v.append(f"block B{b.id}: compressed size {b.compressed_size} must be > 0")
        if b.exec_cycles <= 0:
            v.append(f"block B{b.id}: exec cycles {b.exec_cycles} must be > 0")
        if b.compressed_size > b.uncompressed_size:
            v.append(
                f"block B{b.id}: compressed size {b.compressed_size} exceeds "
                f"uncompressed size {b.uncompressed_size}"
            )

    seen_pairs: set[tuple[BlockId, BlockId]] = set()
    for e in cfg.edges:
        if e.src not in cfg.blocks:
            v.append(f"edge B{e.src} -> B{e.dst}: unknown source block B{e.src}")
        if e.dst not in cfg.blocks:
            v.append(f"edge B{e.src} -> B{e.dst}: unknown destination block B{e.dst}")
        if not (0.0 < e.prob <= 1.0):
            v.append(f"edge B{e.src} -> B{e.dst}: probability {e.prob!r} outside (0, 1]")
        if (e.src, e.dst) in seen_pairs:
            v.append(f"edge B{e.src} -> B{e.dst}: parallel edge")
        seen_pairs.add((e.src, e.dst))

    if cfg.entry not in cfg.blocks:
        v.append(f"entry block B{cfg.entry} not declared")
    if cfg.exit not in cfg.blocks:
        v.append(f"exit block B{cfg.exit} not declared")
    if cfg.entry == cfg.exit and len(cfg.blocks) > 1:
        v.append("entry and exit may coincide only in a single-block graph")

    per_src: dict[BlockId, list[Edge]] = {b: [] for b in cfg.blocks}
    for e in cfg.edges:
        if e.src in per_src:
            per_src[e.src].append(e)

    for bid in sorted(cfg.blocks):
        outs = per_src[bid]
        if bid == cfg.exit:
            if outs:
                v.append(f"exit block B{bid} has {len(outs)} out-edges, expected none")
            continue
        if not outs:
            v.append(f"block B{bid}: non-exit block has no out-edges")
            continue
        s = sum(e.prob for e in outs)
        if abs(s - 1.0) > PROB_TOL:
            v.append(f"block B{bid}: out-edge probabilities sum to {s!r}, expected 1")

    # Reachability from the entry block.
    if cfg.entry in cfg.blocks:
        seen = {cfg.entry}
        work = deque([cfg.entry])
        while work:
            u = work.popleft()
            for e in per_src.get(u, ()):
                if e.dst in cfg.blocks and e.dst not in seen:
                    seen.add(e.dst)
                    work.append(e.dst)
        for bid in sorted(cfg.blocks):
            if bid not in seen:
                v.append(f"block B{bid}: unreachable from entry B{cfg.entry}")

    return ValidationReport(v)


def k_reach(cfg: Cfg, u: BlockId, k: int) -> dict[BlockId, int]:
    """Blocks reachable from the exit of u within k edge traversals.

    Returns {block: shortest edge distance}, distances in 1..k. Direct
    successors are at distance 1. u itself appears only if it sits on a
    cycle of length <= k.
    """
    if u not in cfg.blocks:
        raise ValueError(f"unknown block B{u}")
    if k < 0:
        raise ValueError("k must be >= 0")
    dist: dict[BlockId, int] = {}
    frontier = [u]
    d = 0
    while frontier and d < k:
        d += 1
        nxt = []
        for x in frontier:
            for e in cfg.out_edges(x):
                if e.dst not in dist:
                    dist[e.dst] = d
                    nxt.append(e.dst)
        frontier = nxt
    return dist


def hit_probability(cfg: Cfg, u: BlockId, b: BlockId, k: int) -> float:
    """Probability that a random walk leaving u reaches b within k steps.

    Edge probabilities act as transition probabilities and the walk is
    absorbed on first hitting b. Computed by the recurrence
    H_0(x) = [x = b], H_j(x) = 1 if x = b else sum over out-edges e of x
    of p(e) * H_{j-1}(dst(e)); the result is that sum taken over u's
    out-edges at horizon k-1.
    """
    for ref in (u, b):
        if ref not in cfg.blocks:
            raise ValueError(f"unknown block B{ref}")
    if k < 1:
        raise ValueError("k must be >= 1")

    h = {x: (1.0 if x == b else 0.0) for x in cfg.blocks}
    for _ in range(k - 1):
        nxt = {}
        for x in cfg.blocks:
            if x == b:
                nxt[x] = 1.0
            else:
                nxt[x] = sum(e.prob * h[e.dst] for e in cfg.out_edges(x))
        h = nxt
    return sum(e.prob * h[e.dst] for e in cfg.out_edges(u))
