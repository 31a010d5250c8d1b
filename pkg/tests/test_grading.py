import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posture_audit.certs.validate import ChainIssue, ChainReport, IssueCode
from posture_audit.errors import ConfigError, UnknownCipher
from posture_audit.grading import ServerGrade, grade_server, load_scoring
from posture_audit.datafiles import data_path
from posture_audit.versions import ProtocolVersion as V

from grading_cases import AT, matrix_of, property_violations

CLEAN = ChainReport((), frozenset(), True, AT)
UNTRUSTED = ChainReport((), frozenset({ChainIssue(IssueCode.UCA, 1, "")}), False, AT)


def test_tls13_strong_is_a(catalog):
    # protocol 100, ECDHE 90, 128-bit bulk 80 -> 30 + 27 + 32
    g = grade_server(matrix_of({V.TLS1_3: (0x1301, 0x1302, 0x1303)}), CLEAN, catalog)
    assert g.numeric_score == pytest.approx(89.0)
    assert g.letter == "A" and g.caps_applied == ()
    # 256-bit only -> 30 + 27 + 40
    g = grade_server(matrix_of({V.TLS1_3: (0x1302,)}), CLEAN, catalog)
    assert g.numeric_score == pytest.approx(97.0)


def test_worst_component_drives_score(catalog):
    # TLS1.0 (90), RSA (80), 3DES 112 bits (20) -> 27 + 24 + 8
    g = grade_server(matrix_of({V.TLS1_0: (0x000A,), V.TLS1_2: (0xC02F,)}), CLEAN, catalog)
    assert g.sub_scores == {"protocol": 90, "key_exchange": 80, "cipher_strength": 20}
    assert g.numeric_score == pytest.approx(59.0)
    assert g.letter == "C"


def test_ssl2_is_f(catalog):
    g = grade_server(matrix_of({V.SSL2: (0x0700C0,), V.TLS1_3: (0x1302,)}), CLEAN, catalog)
    assert g.letter == "F" and "ssl2" in g.caps_applied


def test_untrusted_is_t(catalog):
    g = grade_server(matrix_of({V.TLS1_3: (0x1302,)}), UNTRUSTED, catalog)
    assert g.letter == "T"
    assert grade_server(matrix_of({V.TLS1_3: (0x1302,)}), None, catalog).letter == "T"
    both = grade_server(matrix_of({V.SSL2: (0x0700C0,)}), UNTRUSTED, catalog)
    assert both.letter == "T"


def test_insecure_cipher_caps_at_c(catalog):
    g = grade_server(matrix_of({V.TLS1_2: (0xC030, 0xC011)}), CLEAN, catalog)
    assert "insecure_cipher" in g.caps_applied
    assert g.letter in ("C", "D", "E", "F")


def test_no_versions_is_f(catalog):
    g = grade_server(matrix_of({}), CLEAN, catalog)
    assert g.letter == "F" and g.caps_applied == ("no_tls",)


def test_unknown_cipher(catalog):
    with pytest.raises(UnknownCipher):
        grade_server(matrix_of({V.TLS1_2: (0xFEFE,)}), CLEAN, catalog)


def test_grade_round_trip(catalog):
    g = grade_server(matrix_of({V.TLS1_2: (0x002F,)}), CLEAN, catalog)
    assert ServerGrade.from_dict(g.to_dict()) == g


def test_scoring_file_validation(tmp_path):
    tables = load_scoring()
    assert tables.revision == "2009q"
    assert tables.weights == (0.30, 0.30, 0.40)
    text = data_path("grading.ini").read_text()
    bad = tmp_path / "g.ini"
    bad.write_text(text.replace("cipher_strength = 0.40", "cipher_strength = 0.50"))
    with pytest.raises(ConfigError):
        load_scoring(bad)
    bad.write_text(text.replace("anonymous = 0\n", ""))
    with pytest.raises(ConfigError):
        load_scoring(bad)
    with pytest.raises(ConfigError):
        load_scoring(tmp_path / "missing.ini")


def test_letter_is_function_of_score_and_caps(catalog):
    tables = load_scoring()
    rng = random.Random(5)
    from grading_cases import random_accepted, random_chain
    for _ in range(300):
        g = grade_server(matrix_of(random_accepted(rng, catalog)), random_chain(rng), catalog)
        if not g.caps_applied:
            assert g.letter == tables.letter_for(g.numeric_score)


@settings(max_examples=400, deadline=None)
@given(st.integers(0, 2**32))
def test_grading_properties(catalog, seed):
    assert property_violations(random.Random(seed), catalog) == []
