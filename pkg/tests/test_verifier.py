import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import run_parties
from uvmpc.client import BlindMode, Submission, make_submissions, unit_vector
from uvmpc.field import FieldParams, ParameterError, gen_field
from uvmpc.transport import MsgType, ProtocolAbort, SimNetwork, open_session
from uvmpc.verifier import Stage, VerifySession, secure_sum, validate


def sum_on_sim(per_party, f, seed=0):
    """Each party i contributes ``per_party[i-1]``; returns every party's result."""
    return run_parties(
        len(per_party),
        f,
        lambda party: secure_sum(party.session, per_party[party.pid - 1], party.rng),
        seed=seed,
    )


def test_secure_sum_single_entry(f11):
    assert sum_on_sim([[3], [8], [5]], f11) == [[5]] * 3


def test_secure_sum_zero(f11):
    assert sum_on_sim([[0], [0], [0]], f11) == [[0]] * 3


def test_secure_sum_blind_example(f11):
    # columns of the blind matrix [[3,8,5],[2,10,2],[4,4,7]], one per verifier
    shares = [[3, 2, 4], [8, 10, 4], [5, 2, 7]]
    assert sum_on_sim(shares, f11) == [[5, 3, 4]] * 3


@settings(max_examples=15, deadline=None)
@given(
    st.integers(min_value=2, max_value=5),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=0, max_value=2**32),
)
def test_secure_sum_matches_plain_sum(p_count, k, seed):
    f = FieldParams(97)
    rng = random.Random(seed)
    inputs = [[rng.randrange(97) for _ in range(k)] for _ in range(p_count)]
    expected = [sum(col) % 97 for col in zip(*inputs)]
    assert sum_on_sim(inputs, f, seed=seed) == [expected] * p_count


def test_validate_examples(f11):
    assert validate(BlindMode.SQUARE, [5, 3, 4], f11)
    assert validate(BlindMode.PRODUCT, [3, 5, 4], f11)
    assert not validate(BlindMode.PRODUCT, [3, 5, 5], f11)
    assert validate(BlindMode.INVERSE, [3, 5, 3], f11)
    assert not validate(BlindMode.SQUARE, [5, 3, 5], f11)


@pytest.mark.parametrize("mode", list(BlindMode))
def test_zero_guard(mode, f11):
    assert not validate(mode, [0, 0, 0], f11)
    # a single zero entry is enough to reject
    assert not validate(mode, [3, 0, 4], f11)


def test_zero_vector_would_pass_without_guard(f11):
    # 0^i == 0 and 0 == 0*0: the unguarded square and product predicates accept
    sums = [0, 0, 0]
    assert all(pow(sums[0], i + 1, 11) == s for i, s in enumerate(sums))
    assert sums[0] * sums[1] % 11 == sums[2]


def test_inverse_accepts_root_of_unity_multiple():
    # Known limitation: c * e_k passes the inverse check when c^P == 1.
    # At p=13, P=3 the element 3 has order 3.
    f = FieldParams(13)
    assert pow(3, 3, 13) == 1
    rng = random.Random(0)
    for trial in range(50):
        v = [0, 3, 0]
        subs = make_submissions(v, BlindMode.INVERSE, 3, f, rng)
        sums = [sum(c) % 13 for c in zip(*[s.share for s in subs])]
        assert validate(BlindMode.INVERSE, sums, f)
        for mode in (BlindMode.SQUARE, BlindMode.PRODUCT):
            subs = make_submissions(v, mode, 3, f, rng)
            sums = [sum(c) % 13 for c in zip(*[s.share for s in subs])]
            assert not validate(mode, sums, f)


def plain_sums(v, mode, p_count, f, rng):
    subs = make_submissions(v, mode, p_count, f, rng)
    return [sum(c) % f.p for c in zip(*[s.share for s in subs])]


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(list(BlindMode)),
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=1, max_value=10),
    st.data(),
)
def test_completeness_property(mode, p_count, n, data):
    f = gen_field(64, seed=2)
    k = data.draw(st.integers(min_value=0, max_value=n - 1))
    seed = data.draw(st.integers(min_value=0, max_value=2**32))
    assert validate(mode, plain_sums(unit_vector(n, k), mode, p_count, f, random.Random(seed)), f)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(list(BlindMode)),
    st.integers(min_value=3, max_value=6),
    st.lists(st.integers(min_value=0, max_value=3), min_size=2, max_size=8),
    st.integers(min_value=0, max_value=2**32),
)
def test_soundness_property(mode, p_count, v, seed):
    if sorted(v) == [0] * (len(v) - 1) + [1]:
        v = v + [1]  # force a non-unit vector
    f = gen_field(64, seed=2)
    assert not validate(mode, plain_sums(v, mode, p_count, f, random.Random(seed)), f)


def test_resplit_addends_uniform(f11):
    """Addends one verifier sends, pooled over many values, look uniform."""
    k = 3000
    net = SimNetwork(3)

    def main(ep):
        rng = random.Random(ep.party_id)
        session = open_session(ep, f11, b"uniform", random.Random(7))
        return secure_sum(session, [ep.party_id] * k, rng)

    assert net.run(main) == [[6] * k] * 3
    for sender in (1, 2, 3):
        for receiver in (1, 2, 3):
            if sender == receiver:
                continue
            (entry,) = [
                e
                for e in net.transcript()
                if e.msg_type == MsgType.RESPLIT_ADDEND
                and e.sender == sender
                and e.receiver == receiver
            ]
            values = f11.decode_vec(entry.payload, k)
            counts = [values.count(x) for x in range(11)]
            assert stats.chisquare(counts).pvalue > 1e-4


def test_agreement_and_stage_machine():
    f = gen_field(64, seed=5)
    rng = random.Random(1)
    vectors = [unit_vector(5, 1), [0, 2, 0, 0, 0], unit_vector(5, 4)]
    per_query = [make_submissions(v, "square", 4, f, rng) for v in vectors]

    def job(party):
        subs = [q[party.pid - 1] for q in per_query]
        vs = VerifySession(party.session, subs)
        assert vs.stage is Stage.INPUT
        verdicts = vs.run(party.rng)
        assert vs.stage is Stage.VERDICT
        with pytest.raises(RuntimeError):
            vs.run(party.rng)
        return verdicts, vs.sums

    outs = run_parties(4, f, job)
    assert all(o == outs[0] for o in outs)
    assert outs[0][0] == [True, False, True]


def test_session_rejects_wrong_party_count():
    f = gen_field(64, seed=5)
    subs = make_submissions(unit_vector(3, 0), "product", 4, f, random.Random(0))

    def job(party):
        with pytest.raises(ParameterError):
            VerifySession(party.session, [subs[party.pid - 1]]).run(party.rng)
        return True

    assert run_parties(3, f, job) == [True] * 3


def test_silent_party_aborts_with_its_id(f11):
    net = SimNetwork(3, timeout=0.5)

    def main(ep):
        session = open_session(ep, f11, b"silent", random.Random(0))
        if ep.party_id == 3:
            return None
        return secure_sum(session, [1], random.Random(ep.party_id))

    with pytest.raises(ProtocolAbort) as err:
        net.run(main)
    assert err.value.party == 3


def test_submission_roundtrip_through_session_sizes():
    f = gen_field(16, seed=0)
    sub = make_submissions(unit_vector(4, 0), "inverse", 3, f, random.Random(0))[0]
    assert Submission.decode(sub.encode(f), f) == sub
