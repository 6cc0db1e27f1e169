"""Kernel store with an in-memory layer and an optional on-disk ``SNCK`` cache."""
from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .grid import GridSpec
from .kernel import (
    DEFAULT_MEMORY_LIMIT,
    SpectralKernel,
    apply_duffy_correction,
    build_kernel,
    kernel_cache_key,
    load_kernel,
    save_kernel,
)
from .quadrature import tensor_gauss
from .symbols import Symbol, constant, logarithmic

__all__ = ["KernelStore", "default_cache_dir"]

ENV_CACHE_DIR = "SINCPDE_CACHE_DIR"


def default_cache_dir(flag: Optional[str] = None) -> Path:
    """``--cache-dir`` flag, else ``$SINCPDE_CACHE_DIR``, else ``./.sincpde-cache``."""
    if flag:
        return Path(flag)
    env = os.environ.get(ENV_CACHE_DIR)
    return Path(env) if env else Path(".sincpde-cache")


class _FileLock:
    """Exclusive lock file next to a cache entry."""

    def __init__(self, path: Path, timeout: float = 600.0):
        self.path = path
        self.timeout = timeout

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                return self
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise TimeoutError(f"could not acquire {self.path}")
                time.sleep(0.05)

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


class KernelStore:
    """Builds kernels once per cache key.

    Logarithmic symbols with a scale ``rho`` or an additive shift ``c`` are
    assembled from the unscaled logarithmic kernel plus ``(2 log rho + c)`` times
    the identity kernel.  Kernel assembly is linear in the symbol, so this equals
    a direct build up to rounding, and a bisection over radii reuses one
    expensive build.  Such derived kernels are recomputed on every request.
    """

    def __init__(
        self,
        cache_dir: Optional[os.PathLike] = None,
        workers: Optional[int] = None,
        memory_limit: Optional[int] = DEFAULT_MEMORY_LIMIT,
        decompose_log: bool = True,
    ):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.workers = workers
        self.memory_limit = memory_limit
        self.decompose_log = decompose_log
        self._memory: dict[str, SpectralKernel] = {}
        self.hits = 0
        self.builds = 0

    def _path(self, key: str) -> Path:
        digest = hashlib.sha1(key.encode("utf-8")).hexdigest()[:20]
        return self.cache_dir / f"{digest}.snck"

    def _derived(self, sym: Symbol) -> bool:
        return self.decompose_log and sym.kind in ("log", "slog") and (sym.scale != 1.0 or sym.param != 0)

    def _build(self, sym: Symbol, spec: GridSpec, quad_order: int, corrected: bool):
        if self._derived(sym):
            shift = 2.0 * math.log(sym.scale) + (sym.param if sym.kind == "slog" else 0.0)
            base = self.get(logarithmic(), spec, quad_order, corrected)
            ident = self.get(constant(1.0), spec, quad_order, corrected)
            values = base.values + shift * ident.values
            return replace(base, values=values, symbol_id=sym.canonical())
        quad = tensor_gauss(quad_order, spec.dim)
        kern = build_kernel(sym, spec, quad, workers=self.workers, memory_limit=self.memory_limit)
        if corrected:
            kern = apply_duffy_correction(kern, sym, quad)
        self.builds += 1
        return kern

    def lookup(self, key: str) -> Optional[SpectralKernel]:
        if key in self._memory:
            return self._memory[key]
        if self.cache_dir is not None:
            path = self._path(key)
            if path.exists():
                kern = load_kernel(path)
                if kern.cache_key() == key:
                    self._memory[key] = kern
                    return kern
        return None

    def get(self, sym: Symbol, spec: GridSpec, quad_order: int, corrected: bool) -> SpectralKernel:
        key = kernel_cache_key(sym, spec, quad_order, corrected)
        found = self.lookup(key)
        if found is not None:
            self.hits += 1
            return found
        if self._derived(sym):
            # one FFT-free linear combination; not worth memory or disk
            return self._build(sym, spec, quad_order, corrected)
        if self.cache_dir is None:
            kern = self._build(sym, spec, quad_order, corrected)
        else:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            path = self._path(key)
            with _FileLock(path.with_suffix(".lock")):
                if path.exists():
                    kern = load_kernel(path)
                    self.hits += 1
                else:
                    kern = self._build(sym, spec, quad_order, corrected)
                    save_kernel(kern, path)
        self._memory[key] = kern
        return kern

    def clear_memory(self) -> None:
        self._memory.clear()
