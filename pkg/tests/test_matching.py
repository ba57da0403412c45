"""Matching head: pooling, multi-perspective cosines, and mask updates.

Numeric behavior is checked against the independent numpy references in
``tests/oracles.py`` and against central finite differences.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from ecr.errors import ConfigError, InputError
from ecr.matching import ZERO_NORM_GUARD, MatchingConfig, MatchingHead

from tests.oracles import (
    central_difference_gradient,
    match_features_reference,
    max_relative_error,
    multicos_reference,
    pool_span_reference,
)

HIDDEN = 16


def make_head(seed: int = 3) -> MatchingHead:
    torch.manual_seed(seed)
    return MatchingHead(HIDDEN, MatchingConfig(dim=6, perspectives=5, rank=2))


def test_config_validation():
    with pytest.raises(ConfigError):
        MatchingConfig(dim=0).validate()
    with pytest.raises(ConfigError):
        MatchingHead(HIDDEN, MatchingConfig(perspectives=-1))


def test_pool_span_matches_reference():
    head = make_head()
    torch.manual_seed(9)
    hidden = torch.randn(10, HIDDEN)
    pooled = head.pool_span(hidden, 2, 5)
    expected = pool_span_reference(
        hidden.numpy(), head.pool_weight.detach().numpy(), 2, 6
    )
    assert np.abs(pooled.detach().numpy() - expected).max() < 1e-12


def test_pool_span_single_token_returns_the_row():
    head = make_head()
    hidden = torch.randn(5, HIDDEN)
    pooled = head.pool_span(hidden, 3, 3)
    assert torch.allclose(pooled, hidden[3])


def test_pool_span_rejects_bad_inputs():
    head = make_head()
    hidden = torch.randn(5, HIDDEN)
    with pytest.raises(InputError):
        head.pool_span(torch.randn(5, HIDDEN + 1), 0, 1)
    with pytest.raises(InputError):
        head.pool_span(hidden, -1, 2)
    with pytest.raises(InputError):
        head.pool_span(hidden, 2, 5)  # end beyond the last row
    with pytest.raises(InputError):
        head.pool_span(hidden, 3, 2)  # reversed span


def test_multicos_matches_reference():
    head = make_head()
    torch.manual_seed(4)
    x1 = torch.randn(6)
    x2 = torch.randn(6)
    got = head.multicos(x1, x2).detach().numpy()
    expected = multicos_reference(
        head.perspectives().detach().numpy(), x1.numpy(), x2.numpy()
    )
    assert np.abs(got - expected).max() < 1e-12
    assert np.all(np.abs(got) <= 1.0 + 1e-12)


def test_multicos_zero_norm_components_are_zero():
    head = make_head()
    x2 = torch.randn(6)
    assert torch.equal(head.multicos(torch.zeros(6), x2), torch.zeros(5))
    tiny = torch.full((6,), ZERO_NORM_GUARD / 100)
    got = head.multicos(tiny, x2)
    assert torch.equal(got, torch.zeros(5))


def test_multicos_rejects_mismatched_shapes():
    head = make_head()
    with pytest.raises(InputError):
        head.multicos(torch.randn(6), torch.randn(7))
    with pytest.raises(InputError):
        head.multicos(torch.randn(4), torch.randn(4))


def test_match_features_matches_reference():
    head = make_head()
    torch.manual_seed(8)
    x1, x2 = torch.randn(6), torch.randn(6)
    got = head.match_features(x1, x2).detach().numpy()
    expected = match_features_reference(
        head.perspectives().detach().numpy(), x1.numpy(), x2.numpy()
    )
    assert got.shape == (6 + 5,)
    assert np.abs(got - expected).max() < 1e-12


def test_match_features_identical_vectors_score_unit_cosines():
    head = make_head()
    x = torch.randn(6) + 2.0
    feats = head.match_features(x, x)
    cosines = feats[6:]
    weights = head.perspectives()
    defined = (weights * x).norm(dim=-1) > ZERO_NORM_GUARD
    assert torch.allclose(cosines[defined], torch.ones(int(defined.sum())))


def test_update_mask_embeddings_shapes_and_bias_free():
    head = make_head()
    assert head.update_type.bias is None
    assert head.update_arg.bias is None
    assert head.update_coref.bias is None
    args = [torch.randn(HIDDEN) for _ in range(7)]
    new_type, new_arg, new_coref = head.update_mask_embeddings(*args)
    for out in (new_type, new_arg, new_coref):
        assert out.shape == (HIDDEN,)


def test_update_routes_type_and_semantic_evidence_separately():
    head = make_head()
    torch.manual_seed(12)
    base = [torch.randn(HIDDEN) for _ in range(7)]
    ref = head.update_mask_embeddings(*base)

    moved_pooled = list(base)
    moved_pooled[3] = torch.randn(HIDDEN)  # pooled_first
    got = head.update_mask_embeddings(*moved_pooled)
    assert torch.allclose(got[0], ref[0])  # type slot ignores trigger pooling
    assert not torch.allclose(got[1], ref[1])
    assert not torch.allclose(got[2], ref[2])

    moved_type = list(base)
    moved_type[5] = torch.randn(HIDDEN)  # type_first
    got = head.update_mask_embeddings(*moved_type)
    assert not torch.allclose(got[0], ref[0])
    assert torch.allclose(got[1], ref[1])  # arg/coref slots ignore type states
    assert torch.allclose(got[2], ref[2])


def test_multicos_gradient_matches_finite_differences():
    head = make_head(seed=21)
    torch.manual_seed(30)
    x1 = torch.randn(6, requires_grad=True)
    x2 = torch.randn(6)
    head.multicos(x1, x2).sum().backward()
    analytic = x1.grad.numpy()

    weights = head.perspectives().detach().numpy()
    x2_np = x2.numpy()

    def objective(v: np.ndarray) -> float:
        return float(multicos_reference(weights, v, x2_np).sum())

    numeric = central_difference_gradient(objective, x1.detach().numpy().copy())
    assert max_relative_error(analytic, numeric) < 1e-6


def test_pool_span_gradient_matches_finite_differences():
    head = make_head(seed=22)
    torch.manual_seed(31)
    hidden = torch.randn(7, HIDDEN, requires_grad=True)
    head.pool_span(hidden, 1, 4).sum().backward()
    analytic = hidden.grad.numpy()

    weight = head.pool_weight.detach().numpy()

    def objective(h: np.ndarray) -> float:
        return float(pool_span_reference(h, weight, 1, 5).sum())

    numeric = central_difference_gradient(objective, hidden.detach().numpy().copy())
    assert max_relative_error(analytic, numeric) < 1e-6
