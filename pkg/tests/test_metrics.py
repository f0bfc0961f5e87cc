import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalign.metrics import (
    cohens_kappa,
    exact_match,
    extraction_rouge_l,
    normalize_tokens,
    pearson,
    percent_agreement,
    rouge_l,
    token_prf,
    trigram_cosine,
    without_em_rate,
)
from causalign.tagged import Extraction, Relation


class TestNormalizeTokens:
    def test_strips_boundary_punctuation(self):
        assert normalize_tokens("The firm's gross margin,") == [
            "the",
            "firm's",
            "gross",
            "margin",
        ]

    def test_empty(self):
        assert normalize_tokens("") == []

    def test_keeps_currency_and_internal_punctuation(self):
        assert normalize_tokens("$75.00, indicating") == ["$75.00", "indicating"]

    def test_drops_pure_punctuation_tokens(self):
        assert normalize_tokens("a -- b ...") == ["a", "b"]


class TestTokenPRF:
    def test_hand_computed_macro(self):
        pred = Extraction(cause="a b", effect="x y", relation=Relation.CAUSE)
        gold = Extraction(cause="b c", effect="x y", relation=Relation.CAUSE)
        prf = token_prf(pred, gold)
        # cause: overlap {b} -> P=R=F=0.5; effect identical -> 1.0; macro 0.75
        assert prf.f1 == pytest.approx(0.75, abs=1e-9)
        assert prf.precision == pytest.approx(0.75, abs=1e-9)
        assert prf.recall == pytest.approx(0.75, abs=1e-9)

    def test_identity(self):
        e = Extraction(cause="a b c", effect="d e", relation=Relation.CAUSE)
        assert token_prf(e, e) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        pred = Extraction(cause="a", effect="b", relation=Relation.CAUSE)
        gold = Extraction(cause="x", effect="y", relation=Relation.CAUSE)
        assert token_prf(pred, gold) == (0.0, 0.0, 0.0)

    def test_multiset_overlap_counts_duplicates(self):
        pred = Extraction(cause="a a b", effect="x", relation=Relation.CAUSE)
        gold = Extraction(cause="a b b", effect="x", relation=Relation.CAUSE)
        prf = token_prf(pred, gold)
        # cause overlap: min-counts -> {a:1, b:1} = 2 of 3
        assert prf.precision == pytest.approx((2 / 3 + 1.0) / 2, abs=1e-9)

    def test_symmetry_under_swap(self):
        pred = Extraction(cause="a b c", effect="p q", relation=Relation.CAUSE)
        gold = Extraction(cause="b c d e", effect="q r s", relation=Relation.CAUSE)
        fwd = token_prf(pred, gold)
        rev = token_prf(gold, pred)
        assert fwd.precision == pytest.approx(rev.recall, abs=1e-12)
        assert fwd.recall == pytest.approx(rev.precision, abs=1e-12)
        assert fwd.f1 == pytest.approx(rev.f1, abs=1e-12)


class TestExactMatch:
    def test_identity(self):
        e = Extraction(cause="A b", effect="C", relation=Relation.CAUSE)
        assert exact_match(e, e)

    def test_reference_wording_variation_fails(self):
        # Boundary rewording: extra tokens in the reference cause
        out = Extraction(
            cause="the incorporation of poor crack spread futures curves",
            effect="Our near-term earnings forecast is depressed.",
            relation=Relation.CAUSE,
        )
        ref = Extraction(
            cause="the incorporation of crack spread futures curves despite a recent uptick",
            effect="Our near-term earnings forecast is depressed.",
            relation=Relation.CAUSE,
        )
        assert not exact_match(out, ref)

    def test_normalization_insensitive(self):
        a = Extraction(cause="A  b", effect="c D ", relation=Relation.CAUSE)
        b = Extraction(cause="a b", effect="C d", relation=Relation.CAUSE)
        assert exact_match(a, b)

    def test_relation_mismatch_fails(self):
        a = Extraction(cause="a", effect="b", relation=Relation.CAUSE)
        b = Extraction(cause="a", effect="b", relation=Relation.ENABLE)
        assert not exact_match(a, b)


class TestRougeL:
    def test_identical(self):
        assert rouge_l("a b c", "a b c") == 1.0

    def test_hand_lcs(self):
        # LCS("a c d", "a b c d") = 3 -> P=1, R=0.75, F1=6/7
        assert rouge_l("a c d", "a b c d") == pytest.approx(6 / 7, abs=1e-9)

    def test_disjoint(self):
        assert rouge_l("a b", "x y") == 0.0

    def test_empty_rules(self):
        assert rouge_l("", "") == 1.0
        assert rouge_l("a", "") == 0.0
        assert rouge_l("", "a") == 0.0

    def test_order_sensitivity(self):
        # bag overlap is full but LCS is not
        assert rouge_l("b a", "a b") == pytest.approx(0.5, abs=1e-9)

    def test_extraction_macro(self):
        pred = Extraction(cause="a c d", effect="x", relation=Relation.CAUSE)
        gold = Extraction(cause="a b c d", effect="x", relation=Relation.CAUSE)
        assert extraction_rouge_l(pred, gold) == pytest.approx(
            (6 / 7 + 1.0) / 2, abs=1e-9
        )


class TestAgreement:
    def test_identical_series(self):
        a = ["valid", "invalid", "valid"]
        assert percent_agreement(a, list(a)) == 1.0

    def test_opposite_series(self):
        a = ["valid"] * 4
        b = ["invalid"] * 4
        assert percent_agreement(a, b) == 0.0

    def test_94_of_100(self):
        a = ["valid"] * 100
        b = ["valid"] * 94 + ["invalid"] * 6
        assert percent_agreement(a, b) == pytest.approx(0.94, abs=1e-12)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            percent_agreement(["valid"], ["valid", "invalid"])


def _series_from_table(n_vv, n_vi, n_iv, n_ii):
    a = ["v"] * (n_vv + n_vi) + ["i"] * (n_iv + n_ii)
    b = ["v"] * n_vv + ["i"] * n_vi + ["v"] * n_iv + ["i"] * n_ii
    return a, b


class TestKappa:
    def test_identical_nonconstant(self):
        a = ["v", "i", "v", "i"]
        res = cohens_kappa(a, list(a))
        assert res.value == pytest.approx(1.0, abs=1e-12)
        assert not res.degenerate

    def test_contingency_table_oracle(self):
        # [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5 -> kappa = 0.4 (closed form)
        a, b = _series_from_table(20, 5, 10, 15)
        assert cohens_kappa(a, b).value == pytest.approx(0.4, abs=1e-9)

    def test_anti_aligned_balanced(self):
        a = ["v"] * 10 + ["i"] * 10
        b = ["i"] * 10 + ["v"] * 10
        assert cohens_kappa(a, b).value == pytest.approx(-1.0, abs=1e-9)

    def test_degenerate_constant_equal(self):
        res = cohens_kappa(["v"] * 5, ["v"] * 5)
        assert res.value == 1.0
        assert res.degenerate

    def test_two_annotator_third_kappa(self):
        # [[2,1],[1,2]]: p_o = 2/3, p_e = 1/2 -> kappa = 1/3
        a, b = _series_from_table(2, 1, 1, 2)
        assert cohens_kappa(a, b).value == pytest.approx(1 / 3, abs=1e-9)


class TestPearson:
    def test_proportional(self):
        assert pearson([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]) == pytest.approx(1.0, abs=1e-12)

    def test_anti_proportional(self):
        assert pearson([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0, abs=1e-12)

    def test_six_point_fixture(self):
        # frozen from an independent product-moment computation (numpy.corrcoef)
        scores = [0.1, 0.4, 0.35, 0.8, 0.75, 0.9]
        labels = [0, 0, 1, 1, 0, 1]
        assert pearson(scores, labels) == pytest.approx(0.4665694748158435, abs=1e-9)

    def test_constant_series_is_nan(self):
        assert math.isnan(pearson([1.0, 1.0, 1.0], [0, 1, 0]))


class TestWithoutEM:
    def test_all_valid_all_em(self):
        assert without_em_rate([(True, True)] * 5) == 0.0

    def test_13_of_100(self):
        records = [(True, False)] * 13 + [(True, True)] * 40 + [(False, False)] * 47
        assert without_em_rate(records) == pytest.approx(0.13, abs=1e-12)

    def test_mixed_fixture(self):
        records = [(True, False), (True, True), (False, False), (True, False)]
        assert without_em_rate(records) == pytest.approx(0.5, abs=1e-12)

    def test_empty(self):
        assert without_em_rate([]) == 0.0


class TestTrigramCosine:
    def test_identical(self):
        assert trigram_cosine("hello world", "hello  world") == pytest.approx(1.0)

    def test_disjoint(self):
        assert trigram_cosine("aaaa", "bbbb") == 0.0

    def test_both_empty(self):
        assert trigram_cosine("", "") == 1.0


words = st.lists(st.sampled_from(["a", "b", "c", "d", "$3.9", "firm's"]), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(pred_c=words, pred_e=words, gold_c=words, gold_e=words)
def test_metric_ranges_property(pred_c, pred_e, gold_c, gold_e):
    pred = Extraction(cause=" ".join(pred_c), effect=" ".join(pred_e), relation=Relation.CAUSE)
    gold = Extraction(cause=" ".join(gold_c), effect=" ".join(gold_e), relation=Relation.CAUSE)
    prf = token_prf(pred, gold)
    assert 0.0 <= prf.precision <= 1.0
    assert 0.0 <= prf.recall <= 1.0
    assert 0.0 <= prf.f1 <= 1.0
    r = extraction_rouge_l(pred, gold)
    assert 0.0 <= r <= 1.0
    if exact_match(pred, gold):
        assert prf.f1 == pytest.approx(1.0, abs=1e-12)
        assert r == pytest.approx(1.0, abs=1e-12)
