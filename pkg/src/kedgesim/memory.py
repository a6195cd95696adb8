"""Runtime memory image: a permanently resident compressed code area plus
a separate area holding the currently decompressed block copies.

The compressed area never changes (it is the floor of the footprint); a
block "compression" is therefore just the deletion of its decompressed
copy. Space for a decompressed copy is reserved the moment decompression
is requested, so a configured memory cap can be checked at a single point
per request. Each decompressed copy carries a remember set: the branch
sites that were patched to jump straight to the copy, which must be
un-patched when the copy is deleted.

Per-block life cycle: COMPRESSED -> IN_FLIGHT (decompression requested,
space reserved) -> RESIDENT (executable) -> COMPRESSED (copy deleted).
"""

import enum
from dataclasses import dataclass, field

from .cfg import BlockId, Cfg
from .costs import CostModel


class CapError(RuntimeError):
    """The memory cap cannot be satisfied."""


class BlockState(enum.Enum):
    COMPRESSED = "compressed"
    IN_FLIGHT = "in-flight"
    RESIDENT = "resident"


@dataclass(frozen=True, order=True)
class BranchSite:
    """A branch instruction, identified by its block and its ordinal among
    that block's out-edges (sorted by destination id)."""

    from_block: BlockId
    site_index: int


@dataclass
class BlockRuntimeState:
    state: BlockState = BlockState.COMPRESSED
    remaining_cycles: int = 0  # meaningful while IN_FLIGHT
    counter: int = 0  # branch counter, meaningful while RESIDENT
    last_exec_start: int | None = None  # LRU key; None = this copy never ran
    remember_set: set[BranchSite] = field(default_factory=set)


@dataclass
class DecompressRequest:
    """Descriptor for an accepted decompression request."""

    block: BlockId
    remaining_cycles: int
    demand: bool
    evicted: list[tuple[BlockId, int]]  # (block, patches undone), in order


class MemoryState:
    """Mutable memory image. All mutation goes through the owning
    simulation loop; snapshot with copy.deepcopy if needed."""

    def __init__(self, cfg: Cfg, cap: int | None = None):
        self.cfg = cfg
        self.cap = cap
        self.clock = 0
        self.compressed_area_bytes = sum(
            b.compressed_size for b in cfg.blocks.values()
        )
        self.decompressed_area_bytes = 0
        self._rt: dict[BlockId, BlockRuntimeState] = {
            b: BlockRuntimeState() for b in cfg.blocks
        }

    # -- queries ---------------------------------------------------------

    def runtime(self, b: BlockId) -> BlockRuntimeState:
        return self._rt[b]

    def state_of(self, b: BlockId) -> BlockState:
        return self._rt[b].state

    def is_resident(self, b: BlockId) -> bool:
        return self._rt[b].state is BlockState.RESIDENT

    def footprint(self) -> int:
        return self.compressed_area_bytes + self.decompressed_area_bytes

    def resident_blocks(self) -> list[BlockId]:
        return sorted(
            b for b, rt in self._rt.items() if rt.state is BlockState.RESIDENT
        )

    # -- transitions -----------------------------------------------------

    def request_decompress(
        self,
        b: BlockId,
        cost: CostModel,
        demand: bool,
        protected: frozenset[BlockId] = frozenset(),
    ) -> DecompressRequest | None:
        """Reserve space and move b to IN_FLIGHT.

        Requests for blocks that are already IN_FLIGHT or RESIDENT are
        no-ops (returns None). If a cap is set and the reservation would
        exceed it, LRU eviction runs first; raises CapError if eviction
        cannot make room.
        """
        rt = self._rt[b]
        if rt.state is not BlockState.COMPRESSED:
            return None
        needed = self.cfg.block(b).uncompressed_size
        evicted: list[tuple[BlockId, int]] = []
        if self.cap is not None:
            evicted = self.evict_for(needed, protected | {b})
        rt.state = BlockState.IN_FLIGHT
        rt.remaining_cycles = cost.decompress_latency(self.cfg.block(b).compressed_size)
        rt.counter = 0
        self.decompressed_area_bytes += needed
        return DecompressRequest(b, rt.remaining_cycles, demand, evicted)

    def consume_inflight(self, b: BlockId, cycles: int) -> None:
        rt = self._rt[b]
        if rt.state is not BlockState.IN_FLIGHT:
            raise ValueError(f"block B{b} is not in flight")
        if cycles > rt.remaining_cycles:
            raise ValueError(f"block B{b}: cannot consume {cycles} of {rt.remaining_cycles}")
        rt.remaining_cycles -= cycles

    def complete_decompress(self, b: BlockId) -> None:
        rt = self._rt[b]
        if rt.state is not BlockState.IN_FLIGHT:
            raise ValueError(f"block B{b} is not in flight")
        if rt.remaining_cycles != 0:
            raise ValueError(
                f"block B{b} still has {rt.remaining_cycles} decompression cycles left"
            )
        rt.state = BlockState.RESIDENT
        rt.counter = 0

    def begin_execution(self, b: BlockId, cycle: int) -> None:
        rt = self._rt[b]
        if rt.state is not BlockState.RESIDENT:
            raise ValueError(f"block B{b} cannot execute in state {rt.state.value}")
        rt.counter = 0
        rt.last_exec_start = cycle
        self.clock = cycle

    def link_branch(self, site: BranchSite, target: BlockId) -> int:
        """Record that `site` was patched to jump to target's decompressed
        copy. Idempotent; returns 1 iff the patch is new."""
        rt = self._rt[target]
        if rt.state is not BlockState.RESIDENT:
            raise ValueError(f"patch target B{target} is not resident")
        if site in rt.remember_set:
            return 0
        rt.remember_set.add(site)
        return 1

    def delete_resident(self, b: BlockId) -> int:
        """Delete b's decompressed copy; returns the number of branch
        patches that had to be undone (the remember set size)."""
        rt = self._rt[b]
        if rt.state is not BlockState.RESIDENT:
            raise ValueError(f"block B{b} is not resident")
        undone = len(rt.remember_set)
        rt.remember_set.clear()
        rt.state = BlockState.COMPRESSED
        rt.counter = 0
        rt.last_exec_start = None  # LRU age is a property of the copy
        self.decompressed_area_bytes -= self.cfg.block(b).uncompressed_size
        return undone

    def evict_for(
        self, needed: int, protected: frozenset[BlockId] = frozenset()
    ) -> list[tuple[BlockId, int]]:
        """Delete LRU victims until `needed` more bytes fit under the cap.

        Victims are RESIDENT blocks outside `protected`, ordered by
        (never-executed first, last execution start, block id). In-flight
        blocks are never victims. The plan is computed before anything is
        deleted, so an infeasible request raises CapError without side
        effects. Returns the evictions (block, patches undone) in order.
        """
        if self.cap is None:
            raise ValueError("evict_for requires a cap")
        excess = self.footprint() + needed - self.cap
        if excess <= 0:
            return []
        candidates = sorted(
            (
                b
                for b, rt in self._rt.items()
                if rt.state is BlockState.RESIDENT and b not in protected
            ),
            key=lambda b: (
                (0, 0, b)
                if self._rt[b].last_exec_start is None
                else (1, self._rt[b].last_exec_start, b)
            ),
        )
        plan: list[BlockId] = []
        for b in candidates:
            if excess <= 0:
                break
            plan.append(b)
            excess -= self.cfg.block(b).uncompressed_size
        if excess > 0:
            raise CapError(
                f"cap {self.cap} cannot accommodate {needed} more bytes even "
                f"after evicting every resident block"
            )
        return [(b, self.delete_resident(b)) for b in plan]


def init_image(cfg: Cfg, cap: int | None = None) -> MemoryState:
    """Fresh memory image with every block compressed.

    The footprint starts at the sum of compressed sizes, the minimum
    needed to hold the program at all. A cap below that plus the largest
    uncompressed block could never run anything, so it is rejected here.
    """
    state = MemoryState(cfg, cap)
    if cap is not None:
        largest = max(
            cfg.blocks.values(), key=lambda b: (b.uncompressed_size, -b.id)
        )
        minimum = state.compressed_area_bytes + largest.uncompressed_size
        if cap < minimum:
            raise CapError(
                f"cap {cap} below minimum {minimum}: compressed area "
                f"{state.compressed_area_bytes} plus block B{largest.id} "
                f"({largest.uncompressed_size} bytes decompressed)"
            )
    return state
