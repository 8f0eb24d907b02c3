#!/usr/bin/env python3
"""
Operator Cache Module
Handles on-disk caching of assembled dense boundary operator matrices
"""

import os
import shutil
import hashlib
import logging
import tempfile
import threading
import numpy as np
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence
from dotenv import load_dotenv

from bem_kernels import assemble_boundary_operators
from mesh import Surface
from quadrature import QuadratureConfig
from spaces import DenseOperatorBlock, SpaceTag

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


class OperatorCache:
    """
    Stores assembled boundary operators as .npy files keyed by an MD5 hash.

    The key covers the surface geometry, operator kind, wavenumber, test and
    trial spaces and quadrature orders, so a hit is bit-identical to a fresh
    assembly.

    Attributes:
        cache_dir (Path): Directory holding the cached matrices
        hits (int): Number of matrices loaded from disk
        misses (int): Number of matrices assembled and saved
    """

    def __init__(self, cache_dir: str = None):
        """
        Args:
            cache_dir (str): Cache directory; defaults to FEMBEM_CACHE_DIR or ".operator_cache"
        """
        if cache_dir is None:
            cache_dir = os.getenv('FEMBEM_CACHE_DIR', '.operator_cache')
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def clear(self):
        """Remove every cached matrix."""
        shutil.rmtree(self.cache_dir, ignore_errors=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def operator_key(kind: str, surface: Surface, k: float, domain: SpaceTag, dual: SpaceTag,
                     quadrature: QuadratureConfig, test_surface: Optional[Surface] = None) -> str:
        """MD5 digest identifying one assembled operator."""
        digest = hashlib.md5()
        for s in (surface, test_surface if test_surface is not None else surface):
            digest.update(np.ascontiguousarray(s.points).tobytes())
            digest.update(np.ascontiguousarray(s.triangles).tobytes())
        digest.update(f"{kind}|{k!r}|{domain}|{dual}|{quadrature.model_dump_json()}".encode())
        return digest.hexdigest()

    def get_operator_cache_path(self, key: str) -> Path:
        """
        Cache file path of an operator key.

        Args:
            key (str): Digest from operator_key

        Returns:
            Path: Location of the .npy file
        """
        return self.cache_dir / f"operator_{key}.npy"

    def get_or_assemble(self, key: str, assemble: Callable[[], np.ndarray]) -> np.ndarray:
        """
        Load a matrix from the cache or assemble and store it.

        Args:
            key (str): Digest from operator_key
            assemble (Callable): Builds the matrix on a miss

        Returns:
            np.ndarray: The operator matrix
        """
        cache_path = self.get_operator_cache_path(key)

        if cache_path.exists():
            with self._lock:
                self.hits += 1
            logger.debug(f"Operator cache hit {cache_path.name}")
            return np.load(cache_path)

        matrix = assemble()
        # concurrent sweeps may race on the same key; readers only ever see complete files
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        with os.fdopen(fd, "wb") as f:
            np.save(f, matrix)
        os.replace(tmp, cache_path)
        with self._lock:
            self.misses += 1
        return matrix

    def boundary_operators(self, kinds: Sequence[str], surface: Surface, k: float, domain: SpaceTag,
                           dual: SpaceTag, quadrature: Optional[QuadratureConfig] = None,
                           test_surface: Optional[Surface] = None) -> Dict[str, DenseOperatorBlock]:
        """Cache-first version of bem_kernels.assemble_boundary_operators."""
        quadrature = quadrature or QuadratureConfig()
        keys = {kind: self.operator_key(kind, surface, k, domain, dual, quadrature, test_surface)
                for kind in kinds}
        missing = [kind for kind in kinds if not self.get_operator_cache_path(keys[kind]).exists()]
        fresh = {}
        if missing:
            fresh = assemble_boundary_operators(missing, surface, k, domain, dual, quadrature, test_surface)
        return {kind: DenseOperatorBlock(self.get_or_assemble(keys[kind], lambda kind=kind: fresh[kind].matrix),
                                         domain, dual, kind)
                for kind in kinds}


def assemble_cached(kinds: Sequence[str], surface: Surface, k: float, domain: SpaceTag, dual: SpaceTag,
                    quadrature: Optional[QuadratureConfig] = None, test_surface: Optional[Surface] = None,
                    cache: Optional[OperatorCache] = None) -> Dict[str, DenseOperatorBlock]:
    """Assemble through the cache when one is given, directly otherwise."""
    if cache is None:
        return assemble_boundary_operators(kinds, surface, k, domain, dual, quadrature, test_surface)
    return cache.boundary_operators(kinds, surface, k, domain, dual, quadrature, test_surface)
