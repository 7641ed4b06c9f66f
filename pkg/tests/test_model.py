import json
import math
from fractions import Fraction

import numpy as np
import pytest

from overcnn import (Dataset, HyperParams, Image, Topology, WeightVector,
                     derive_theorem1_hyperparams, parameter_count, validate_topology)
from overcnn.errors import DomainError
from overcnn.serialize import dumps_json


class TestImage:
    def test_valid(self):
        img = Image(np.full((3, 2), 0.5))
        assert img.d1 == 3 and img.d2 == 2

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            Image(np.full((2, 2), 1.5))

    def test_rejects_degenerate_grid(self):
        with pytest.raises(DomainError):
            Image(np.zeros((1, 5)))


class TestValidateTopology:
    def test_wrong_M_length(self):
        t = Topology(L=2, M=(1, 1), k=(1, 2, 1), K=1, d1=4, d2=4, kappa=1)
        assert "M must have L+1 entries" in validate_topology(t)

    def test_kappa_exceeds_grid(self):
        t = Topology(L=2, M=(3, 1, 3), k=(1, 18, 1), K=1, d1=2, d2=5, kappa=3)
        assert "kappa exceeds min(d1, d2)" in validate_topology(t)

    def test_theorem1_pattern_accepted(self):
        t = Topology(L=3, M=(2, 1, 1, 2), k=(1, 8, 8, 1), K=5, d1=4, d2=4, kappa=2)
        assert validate_topology(t) == []

    def test_free_mode_skips_pattern(self):
        t = Topology(L=2, M=(2, 2, 2), k=(1, 3, 1), K=1, d1=4, d2=4, kappa=2)
        assert validate_topology(t, theorem1_mode=True)
        assert validate_topology(t, theorem1_mode=False) == []

    def test_k0_kL_enforced(self):
        t = Topology(L=2, M=(1, 1, 1), k=(2, 2, 1), K=1, d1=4, d2=4, kappa=1)
        assert any("k_0" in e for e in validate_topology(t, theorem1_mode=False))


class TestParameterCount:
    def test_hand_counted_small(self):
        t = Topology(L=2, M=(1, 1, 1), k=(1, 2, 1), K=1, d1=4, d2=4, kappa=1)
        assert parameter_count(t) == 8

    def test_linear_in_K(self):
        # K outer weights plus K copies of the 7 per-sub-network parameters
        t = Topology(L=2, M=(1, 1, 1), k=(1, 2, 1), K=3, d1=4, d2=4, kappa=1)
        assert parameter_count(t) == 3 * 8

    def test_hand_counted_kappa2(self):
        t = Topology(L=2, M=(2, 1, 2), k=(1, 8, 1), K=1, d1=4, d2=4, kappa=2)
        assert parameter_count(t) == 1 + (4 * 1 * 8 + 8) + (1 * 8 * 1 + 1)

    def test_matches_flat_length_random(self):
        g = np.random.default_rng(2024)
        for _ in range(100):
            kappa = int(g.integers(1, 3))
            L = int(g.integers(2, 5))
            K = int(g.integers(1, 9))
            d1 = int(g.integers(max(2, kappa), 6))
            d2 = int(g.integers(max(2, kappa), 6))
            t = Topology.theorem1(kappa=kappa, L=L, K=K, d1=d1, d2=d2)
            assert validate_topology(t) == []
            assert parameter_count(t) == WeightVector.zeros(t).data.size


class TestWeightVector:
    def test_flatten_round_trip_exact(self):
        g = np.random.default_rng(7)
        t = Topology.theorem1(kappa=2, L=3, K=4, d1=5, d2=4)
        flat = g.standard_normal(parameter_count(t))
        w = WeightVector(t, flat)
        rebuilt = WeightVector.from_parts(t, w.outer, list(w.filters), list(w.biases))
        assert np.array_equal(rebuilt.data, flat)

    def test_views_are_read_only(self):
        t = Topology.theorem1(kappa=1, L=2, K=2, d1=4, d2=4)
        w = WeightVector.zeros(t)
        with pytest.raises(ValueError):
            w.outer[0] = 1.0

    def test_wrong_length_rejected(self):
        t = Topology.theorem1(kappa=1, L=2, K=2, d1=4, d2=4)
        with pytest.raises(DomainError):
            WeightVector(t, np.zeros(parameter_count(t) + 1))


class TestTheorem1HyperParams:
    def test_tau(self):
        hp = derive_theorem1_hyperparams(3, 2, 3)
        assert hp.tau == 1.0 / 5.0

    def test_theorem1_channels(self):
        t = Topology.theorem1(kappa=2, L=3, K=1, d1=4, d2=4)
        assert t.k == (1, 8, 8, 1)
        assert t.M == (2, 1, 1, 2)

    def test_K_n_exact_small_n(self):
        # ceil(3^9 * ln 3) evaluated in exact rational arithmetic
        hp = derive_theorem1_hyperparams(3, 1, 2, {"c4": 1.0, "c5": 0.5})
        assert hp.K_n == 21624

    def test_L_n_dominates_growth_condition(self):
        hp = derive_theorem1_hyperparams(3, 1, 2, {"c4": 1.0, "c5": 0.5})
        target = Fraction(math.log(3)) ** (6 * hp.L + 2) ** 1  # (log n)^(6L+2)
        assert hp.L_n ** 2 >= float(target * target) * hp.K_n ** 3 * (1 - 1e-12)
        assert hp.t_n == math.ceil(Fraction(0.5) * Fraction(math.log(3)) * hp.L_n)

    def test_deterministic(self):
        a = derive_theorem1_hyperparams(5, 1, 2)
        b = derive_theorem1_hyperparams(5, 1, 2)
        assert a == b

    def test_step_size_exact_inverse(self):
        hp = derive_theorem1_hyperparams(4, 1, 2)
        assert hp.lambda_exact * hp.L_n == 1

    def test_overflow_reported(self):
        with pytest.raises(OverflowError):
            derive_theorem1_hyperparams(50, 2, 3)

    def test_constants_constraint(self):
        with pytest.raises(DomainError):
            derive_theorem1_hyperparams(3, 1, 2, {"c4": 0.1, "c5": 1.0})

    def test_preconditions(self):
        with pytest.raises(DomainError):
            derive_theorem1_hyperparams(2, 1, 2)
        with pytest.raises(DomainError):
            derive_theorem1_hyperparams(3, 1, 1)


class TestDeskMode:
    def test_constructs_from_user_sizes(self):
        hp = HyperParams.desk(n=100, kappa=1, L=2, K_n=64, L_n=250, t_n=500)
        assert hp.mode == "desk"
        assert hp.lambda_exact * hp.L_n == 1
        assert hp.tau == 0.5

    def test_c5_constraint_still_enforced(self):
        with pytest.raises(DomainError):
            HyperParams.desk(n=10, kappa=1, L=2, K_n=1, L_n=1, t_n=0,
                             c4=0.1, c5=0.2)


class TestSerialization:
    def test_hyperparams_json_field_types(self):
        hp = HyperParams.desk(n=100, kappa=1, L=2, K_n=64, L_n=250, t_n=500)
        doc = json.loads(dumps_json(hp.to_json_dict()))
        for field in ("n", "kappa", "L", "K_n", "L_n", "t_n"):
            assert isinstance(doc[field], int)
        for field in ("tau", "lambda_n", "c2", "c3", "c4", "c5"):
            assert isinstance(doc[field], float)
        assert HyperParams.from_json_dict(doc) == hp

    def test_floats_carry_17_significant_digits(self):
        text = dumps_json({"tau": 0.5})
        assert "5.0000000000000000e-01" in text

    def test_topology_round_trip(self):
        t = Topology.theorem1(kappa=2, L=3, K=7, d1=6, d2=5)
        doc = json.loads(dumps_json(t.to_json_dict()))
        assert Topology.from_json_dict(doc) == t


class TestDataset:
    def test_label_domain_enforced(self):
        with pytest.raises(DomainError):
            Dataset(pixels=np.zeros((2, 4, 4)), labels=np.array([0, 2]))

    def test_indexing(self):
        ds = Dataset(pixels=np.full((3, 2, 2), 0.25), labels=np.array([0, 1, 0]))
        img, y = ds[1]
        assert y == 1 and img.pixels.shape == (2, 2)
