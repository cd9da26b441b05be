import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scramble_lab.choi import (
    entropy_bundle,
    entropy_cd,
    equal_quadripartition,
    mutual_information,
    purity_cd,
    spatial_partition,
    subsystem_entropy,
    tmi,
)
from scramble_lab.haar import haar_i3_reference, sample_haar_unitary
from scramble_lab.spin import ModelParams, build_hamiltonian, build_propagator
from scramble_lab.trajectory import EvolutionOperator, sample_pattern, step


def random_normalized(L, rng):
    N = 2**L
    M = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return EvolutionOperator.from_matrix(M * math.sqrt(N) / np.linalg.norm(M))


def choi_entropy_oracle(K, legs):
    """Partial trace of the Choi vector built bit by bit.

    Bit j of the 2L-bit index is input site j for j < L and output site j-L
    otherwise; amplitude at (nu, mu) is K[mu, nu] / sqrt(N).
    """
    L = int(round(math.log2(K.shape[0])))
    N = 2**L
    psi = np.zeros(N * N, dtype=complex)
    for nu in range(N):
        for mu in range(N):
            psi[nu + N * mu] = K[mu, nu]
    psi /= math.sqrt(N)
    legs = sorted(legs)
    rest = [b for b in range(2 * L) if b not in legs]
    idx = np.arange(N * N)
    row = sum(((idx >> b) & 1) << k for k, b in enumerate(legs))
    col = sum(((idx >> b) & 1) << k for k, b in enumerate(rest))
    M = np.zeros((2 ** len(legs), 2 ** len(rest)), dtype=complex)
    M[row, col] = psi
    rho = M @ M.conj().T
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-14]
    return float(-np.sum(w * np.log2(w)))


def all_subsets(L):
    for k in range(0, 2 * L + 1):
        yield from itertools.combinations(range(2 * L), k)


def chaotic_operator(L, p, seed, n_steps):
    params = ModelParams(L, -1.0, 1.05, -0.5, "open")
    U = build_propagator(build_hamiltonian(params), 1.0)
    K = EvolutionOperator.identity(L)
    by_step = sample_pattern(p, L, n_steps, seed).by_step()
    for t in range(1, n_steps + 1):
        K = step(K, U, by_step.get(t, []))
    return K


# partitions

def test_equal_quadripartition_l4():
    part = equal_quadripartition(4)
    assert part.sites("A") == (0, 1) and part.sites("B") == (2, 3)
    assert part.sites("C") == (0, 1) and part.sites("D") == (2, 3)
    assert part.legs("A") == (0, 1) and part.legs("D") == (6, 7)


def test_equal_quadripartition_sizes():
    part = equal_quadripartition(2)
    assert [part.sites(x) for x in "ABCD"] == [(0,), (1,), (0,), (1,)]
    part = equal_quadripartition(10)
    assert all(len(part.sites(x)) == 5 for x in "ABCD")
    assert sorted(part.legs("ABCD")) == list(range(20))
    with pytest.raises(ValueError):
        equal_quadripartition(5)


def test_spatial_partition():
    assert spatial_partition(6, 0).sites("D") == (2, 3)
    assert spatial_partition(6, 2).sites("D") == (4, 5)
    assert spatial_partition(6, 1).sites("A") == (0, 1)
    assert len([spatial_partition(10, r) for r in range(10 - 3)]) == 7
    with pytest.raises(ValueError):
        spatial_partition(6, 3)
    with pytest.raises(ValueError):
        spatial_partition(6, -1)


# entropies

def test_identity_entropies():
    L = 4
    K = EvolutionOperator.identity(L)
    for k in range(L + 1):
        for sub in itertools.combinations(range(L), k):
            assert subsystem_entropy(K, sub) == pytest.approx(k, abs=1e-12)
    for j in range(L):
        assert subsystem_entropy(K, (j, L + j)) == pytest.approx(0.0, abs=1e-12)


def test_entropies_match_partial_trace_oracle():
    rng = np.random.default_rng(3)
    for L in (2, 3):
        K = random_normalized(L, rng)
        for sub in all_subsets(L):
            assert abs(subsystem_entropy(K, sub) - choi_entropy_oracle(K.matrix, sub)) < 1e-10


def test_gram_and_svd_paths_agree_l3_unitary():
    U = EvolutionOperator.from_matrix(sample_haar_unitary(8, 17))
    for sub in all_subsets(3):
        g = subsystem_entropy(U, sub, method="gram")
        s = subsystem_entropy(U, sub, method="svd")
        assert abs(g - s) < 1e-9
        comp = tuple(x for x in range(6) if x not in sub)
        assert abs(g - subsystem_entropy(U, comp)) < 1e-9


@settings(max_examples=6, deadline=None)
@given(L=st.integers(2, 4), seed=st.integers(0, 2**32))
def test_dual_paths_and_complementarity_on_random_operators(L, seed):
    K = random_normalized(L, np.random.default_rng(seed))
    for sub in all_subsets(L):
        g = subsystem_entropy(K, sub, method="gram")
        assert abs(g - subsystem_entropy(K, sub, method="svd")) < 1e-9
        comp = tuple(x for x in range(2 * L) if x not in sub)
        assert abs(g - subsystem_entropy(K, comp)) < 1e-9
        assert -1e-12 <= g <= min(len(sub), 2 * L - len(sub)) + 1e-9


def test_factored_operator_entropies_match_dense():
    K = chaotic_operator(6, 0.3, 5, 12)
    assert K.right is not None, "expected a rank-compressed operator"
    dense = EvolutionOperator.from_matrix(K.matrix)
    rng = np.random.default_rng(0)
    for _ in range(40):
        sub = tuple(rng.choice(12, size=rng.integers(1, 12), replace=False))
        assert abs(subsystem_entropy(K, sub) - subsystem_entropy(dense, sub)) < 1e-9
    for sub in itertools.combinations(range(6, 12), 3):
        assert abs(subsystem_entropy(K, sub) - choi_entropy_oracle(K.matrix, sub)) < 1e-9


def test_unnormalized_operator_rejected():
    K = EvolutionOperator.from_matrix(2 * np.eye(4))
    with pytest.raises(ValueError):
        subsystem_entropy(K, (0,))
    with pytest.raises(ValueError):
        subsystem_entropy(EvolutionOperator.identity(2), (4,))


# mutual information and I3

def test_identity_mutual_informations():
    L = 6
    b = entropy_bundle(EvolutionOperator.identity(L), equal_quadripartition(L))
    mi = b.mutual_informations()
    assert mi["I_AC"] == pytest.approx(L)
    assert mi["I_AD"] == pytest.approx(0.0, abs=1e-12)
    assert b.i3 == pytest.approx(0.0, abs=1e-12)


def test_mutual_information_clamp():
    assert mutual_information(1.0, 1.0, 2.0 + 1e-6) == -1e-9
    assert mutual_information(1.0, 1.0, 2.0 + 1e-12) == pytest.approx(-1e-12, abs=1e-15)
    assert mutual_information(1.0, 1.0, 1.5) == 0.5


def test_product_unitary_is_local():
    rng = np.random.default_rng(8)
    U = np.array([[1.0]])
    for _ in range(4):
        U = np.kron(U, sample_haar_unitary(2, rng))
    b = entropy_bundle(EvolutionOperator.from_matrix(U), equal_quadripartition(4))
    assert abs(b.mutual_informations()["I_AD"]) < 1e-9
    assert b.mutual_informations()["I_AC"] == pytest.approx(4.0)
    assert abs(b.i3) < 1e-9


def site_permutation_matrix(perm):
    """Unitary sending input site j to output site perm[j]."""
    L = len(perm)
    N = 2**L
    P = np.zeros((N, N))
    for n in range(N):
        m = sum(((n >> j) & 1) << perm[j] for j in range(L))
        P[m, n] = 1.0
    return P


def test_half_swap_permutation_has_zero_i3():
    K = EvolutionOperator.from_matrix(site_permutation_matrix([2, 3, 0, 1]))
    b = entropy_bundle(K, equal_quadripartition(4))
    mi = b.mutual_informations()
    # everything A held now sits in D
    assert mi["I_AD"] == pytest.approx(4.0) and abs(mi["I_AC"]) < 1e-12
    assert abs(b.i3) < 1e-12


@settings(max_examples=20, deadline=None)
@given(perm=st.permutations(range(4)))
def test_any_site_permutation_has_zero_i3(perm):
    K = EvolutionOperator.from_matrix(site_permutation_matrix(list(perm)))
    assert abs(tmi(K, equal_quadripartition(4)).i3) < 1e-9


def test_i3_vanishes_at_start_for_every_partition():
    for L in (2, 4, 6, 8):
        K = EvolutionOperator.identity(L)
        assert abs(tmi(K, equal_quadripartition(L)).i3) < 1e-9
    for r in range(8 - 3):
        assert abs(tmi(EvolutionOperator.identity(8), spatial_partition(8, r)).i3) < 1e-9


def test_haar_unitary_scrambles(tmp_path):
    ref = haar_i3_reference(6, 20, seed=4, cache_dir=tmp_path)
    K = EvolutionOperator.from_matrix(sample_haar_unitary(64, 99))
    sample = tmi(K, equal_quadripartition(6), ref)
    assert sample.i3 < 0
    spread = ref.std_error * math.sqrt(ref.n_samples)
    assert abs(abs(sample.i3) - ref.mean_abs_i3) < 3 * spread
    assert sample.i3_normalized == pytest.approx(sample.i3 / ref.mean_abs_i3)


def test_bundle_bounds_and_symmetry_on_measured_operator():
    K = chaotic_operator(6, 0.15, 11, 20)
    part = equal_quadripartition(6)
    b = entropy_bundle(K, part)
    sizes = {"S_A": 3, "S_B": 3, "S_C": 3, "S_D": 3, "S_AC": 6, "S_AD": 6, "S_CD": 6}
    for name, k in sizes.items():
        assert -1e-12 <= getattr(b, name) <= min(k, 12 - k) + 1e-9
    # S_ACD is the complement of B
    assert abs(subsystem_entropy(K, part.legs("ACD")) - b.S_B) < 1e-9
    assert abs(b.S_CD - subsystem_entropy(K, part.legs("CD"))) < 1e-9
    assert all(v >= -1e-9 for v in b.mutual_informations().values())


# purity

def test_purity_limits():
    for L in (2, 5):
        assert purity_cd(EvolutionOperator.identity(L)) == pytest.approx(2.0**-L, rel=1e-12)
    v = np.random.default_rng(1).standard_normal(8) + 0j
    K = np.outer(v, v.conj())
    K *= math.sqrt(8) / np.linalg.norm(K)
    assert purity_cd(EvolutionOperator.from_matrix(K)) == pytest.approx(1.0, rel=1e-12)


def test_purity_matches_trace_formula():
    K = random_normalized(3, np.random.default_rng(2))
    M = K.matrix
    ref = np.trace((M @ M.conj().T) @ (M @ M.conj().T)).real / 64
    assert purity_cd(K) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_purity_and_output_entropy_unitary_invariant(seed):
    rng = np.random.default_rng(seed)
    K0 = random_normalized(3, rng)
    V = sample_haar_unitary(8, rng)
    K1 = EvolutionOperator.from_matrix(V @ K0.matrix)
    assert purity_cd(K1) == pytest.approx(purity_cd(K0), rel=1e-10)
    assert entropy_cd(K1) == pytest.approx(entropy_cd(K0), abs=1e-10)


def test_unitary_evolution_keeps_output_maximally_mixed():
    params = ModelParams(6, -1.0, 1.05, -0.5)
    U = build_propagator(build_hamiltonian(params), 1.0)
    K = EvolutionOperator.identity(6)
    for t in range(1, 8):
        K = step(K, U)
        assert abs(entropy_cd(K) - 6) < 1e-8
        assert abs(subsystem_entropy(K, range(6, 12)) - 6) < 1e-8
