"""Deterministic per-role random streams.

``seed_derivation(master, role, index)`` hashes the triple with SHA-256 and
keeps the first 8 bytes, so streams for different roles (``init``,
``shuffle``, ``augment``, ``fold`` ...) or indices are independent and stable
across platforms and Python versions.
"""

import hashlib

import numpy as np


def seed_derivation(master_seed, role_tag, index=0):
    key = f"{int(master_seed)}:{role_tag}:{int(index)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def rng_for(master_seed, role_tag, index=0):
    return np.random.default_rng(seed_derivation(master_seed, role_tag, index))
