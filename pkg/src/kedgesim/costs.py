"""Cycle cost parameters for the simulated machine.

No costs are baked in; every knob is an input so that configurations can
be swept. Decompressing a block takes decomp_base plus decomp_per_byte
times its compressed size. A demand miss additionally pays
exception_cycles for the fault handler before the decompression request
is even issued. Branch patching and block deletion are background work:
they are charged to a background budget, never to execution stalls.
"""

from dataclasses import dataclass


@dataclass
class CostModel:
    decomp_base: int = 0
    decomp_per_byte: int = 0
    exception_cycles: int = 0
    patch_cycles: int = 0
    compress_cycles: int = 0

    def __post_init__(self):
        for name in (
            "decomp_base",
            "decomp_per_byte",
            "exception_cycles",
            "patch_cycles",
            "compress_cycles",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def decompress_latency(self, compressed_size: int) -> int:
        return self.decomp_base + self.decomp_per_byte * compressed_size
