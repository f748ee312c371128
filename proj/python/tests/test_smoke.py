import math

import pytest

import cotlab


def test_parity_samples_label_is_support_product():
    for inst in cotlab.parity_samples(8, [2, 4, 6], n=20, seed=3):
        prod = 1
        for j in [2, 4, 6]:
            prod *= inst["bits"][j - 1]
        assert inst["label"] == prod


def test_grad_check_agrees():
    assert cotlab.grad_check(12, [2, 5], n=16, d_model=8) <= 1e-5


def test_invariance_and_gates():
    assert cotlab.check_parity_invariance([0.3, -1.2], [0.7, 0.1], 3)
    assert cotlab.apply_gate("NAND", False, False) is True
    assert cotlab.apply_gate("XOR", True, True) is False
    assert cotlab.apply_gate("NOT", True) is False


def test_train_small_explicit():
    rec = cotlab.train(mode="explicit", d=8, k=4, s=0, d_model=16, max_steps=3000, seed=2)
    assert rec["converged"]
    with pytest.raises(cotlab.ConfigError):
        cotlab.train(bogus=1)


def test_natbool_roundtrip_and_verify():
    samples = cotlab.natbool_samples(4, 10, seed=5)
    assert len(samples) == 10
    assert all(s["hops"] == 4 for s in samples)
    assert cotlab.verify_sample(samples[0]) == []
    bad = dict(samples[0], answer=not samples[0]["answer"])
    kinds = [k for k, _ in cotlab.verify_sample(bad)]
    assert kinds[0] == "answer-mismatch"
    toks = cotlab.natbool_tokens(samples[0], with_cot=True)
    assert any(t.startswith("g0:") for t in toks)


def test_metrics_on_xor():
    tokens, labels = [], []
    for _ in range(10):
        for a in (0, 1):
            for b in (0, 1):
                tokens.append([t for t, on in (("a", a), ("b", b)) if on])
                labels.append(a ^ b)
    assert cotlab.pmi(tokens, labels, ["a", "b"], 0, smoothing=0.0) == pytest.approx(math.log(2))
    assert cotlab.synergy(tokens, labels, ["a", "b"], 0, smoothing=0.0) == pytest.approx(math.log(2))
    st = cotlab.density_quality(tokens, labels, 2, smoothing=0.0)
    assert st["phi"] == pytest.approx(math.log(2))
    with pytest.raises(cotlab.InputError):
        cotlab.pmi(tokens, labels, ["a", "a"], 0)
