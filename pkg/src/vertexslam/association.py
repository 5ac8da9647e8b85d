"""Feature association by exact vertex-id equality.

Ids are the descriptors, so matching is set intersection over sorted id
arrays: no similarity search, no outliers, reproducible ordering.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatchPair:
    index_a: int
    index_b: int
    id: int


def _require_sorted_unique(ids, name):
    ids = np.asarray(ids)
    if len(ids) > 1 and not np.all(np.diff(ids) > 0):
        raise ValueError(f"{name} ids must be strictly increasing (duplicate id?)")
    return ids


def match_id_arrays(ids_a, ids_b):
    """Intersect two strictly-increasing id arrays.

    Returns (idx_a, idx_b, shared_ids), all ascending in id.
    """
    ids_a = _require_sorted_unique(ids_a, "frame a")
    ids_b = _require_sorted_unique(ids_b, "frame b")
    shared, idx_a, idx_b = np.intersect1d(
        ids_a, ids_b, assume_unique=True, return_indices=True
    )
    return idx_a, idx_b, shared


def match_frames(a, b):
    """All id matches between two frames, ascending by id."""
    idx_a, idx_b, shared = match_id_arrays(a.ids, b.ids)
    return [
        MatchPair(int(i), int(j), int(vid))
        for i, j, vid in zip(idx_a, idx_b, shared)
    ]


def match_to_map(frame, slam_map):
    """Pair frame features with existing map points by id.

    Returns a list of (feature_index, map_point_id), ascending by id.
    """
    map_ids = slam_map.point_ids()
    idx_f, _, shared = match_id_arrays(frame.ids, map_ids)
    return [(int(i), int(vid)) for i, vid in zip(idx_f, shared)]
