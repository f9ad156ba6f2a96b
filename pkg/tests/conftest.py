"""Shared helpers for building small hand-specified scenarios."""

import numpy as np

from cooploc.network import Scenario


def make_scenario(references, targets, anchor_links=None, target_links=None):
    """Build a 2-D scenario from id-keyed link dicts.

    anchor_links: {target_id: {reference_id: range}}; reference ids are
    n+1..n+m. target_links: {target_id: {target_id: range}}, given for
    both directions.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    references = np.asarray(references, dtype=float).reshape(-1, 2)
    n = targets.shape[0]
    anchor_links = anchor_links or {}
    target_links = target_links or {}
    s = Scenario(
        dimension=2,
        references=references,
        targets_true=targets,
        anchor_links=tuple(dict(anchor_links.get(i, {})) for i in range(1, n + 1)),
        target_links=tuple(dict(target_links.get(i, {})) for i in range(1, n + 1)),
    )
    s.validate()
    return s


def min_boundary_margin(x, s, i):
    """Smallest |distance-to-center - radius| over target i's balls."""
    p = x[i - 1]
    margins = []
    for j, r in s.anchor_links[i - 1].items():
        margins.append(abs(np.linalg.norm(p - s.reference_position(j)) - r))
    for q, r in s.target_links[i - 1].items():
        margins.append(abs(np.linalg.norm(p - x[q - 1]) - r))
    return min(margins) if margins else np.inf
