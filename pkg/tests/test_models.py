import itertools

import numpy as np
import pytest
import torch
from scipy.special import logsumexp

from propgroup.config import ModelConfig
from propgroup.core import BBox, Proposal, SegTensor
from propgroup.errors import ConfigurationError, InvalidProposalError
from propgroup.models import (assign_frame, assignment_logits, batched_step_log_probs,
                              build_nets, candidate_slots, count_parameters, select_proposals)
from propgroup.synthdata import ProposalNoise, generate_split

TINY = ModelConfig(input_size=16, widths=(4,) * 9, head=(16, 8, 8, 8), k_max=6)


@pytest.fixture(scope="module")
def videos():
    return generate_split(10, 77, ProposalNoise(), frames=10, resolution=(32, 32),
                          object_size=(6, 10))


@pytest.fixture(scope="module")
def nets():
    return build_nets(TINY, seed=1)


def frame_cases(videos, limit=100):
    for v in videos:
        for t in range(len(v)):
            prev_map = v.gt[t - 1] if t else np.zeros(v.shape, int)
            yield v.frames[t], v.proposals[t][:5], SegTensor.from_labelmap(prev_map, TINY.k_max)
            limit -= 1
            if limit == 0:
                return


def test_candidates_are_occupied_plus_lowest_empty():
    prev = SegTensor.empty(4, 4, 5).commit(np.eye(4, dtype=bool), 3)
    partial = SegTensor.empty(4, 4, 5).commit(np.fliplr(np.eye(4, dtype=bool)), 1)
    assert candidate_slots(prev, partial) == [1, 2, 3]
    full = SegTensor.from_labelmap(np.arange(16).reshape(4, 4) % 6, 5)
    assert candidate_slots(full, SegTensor.empty(4, 4, 5)) == [1, 2, 3, 4, 5]


def test_logits_masked_outside_candidates(videos, nets):
    _, asg = nets
    frame, props, prev = next(frame_cases(videos[1:]))
    partial = SegTensor.empty(*frame.shape, TINY.k_max)
    logits = assignment_logits(asg, frame, props[0], prev, partial)
    cands = candidate_slots(prev, partial)
    for k in range(1, TINY.k_max + 1):
        assert np.isfinite(logits[k - 1]) == (k in cands)


def test_zero_weights_give_uniform_policy(videos):
    _, asg = build_nets(TINY, seed=0)
    with torch.no_grad():
        for p in asg.parameters():
            p.zero_()
    frame, props, prev = next(frame_cases(videos[2:]))
    fa = assign_frame(asg, frame, props, prev)
    for s in fa.steps:
        assert np.allclose(s.probs, 1.0 / len(s.candidates))


def test_siamese_scoring_is_slot_permutation_equivariant(videos, nets):
    _, asg = nets
    v = videos[3]
    lab = v.gt[0]
    ids = [i for i in np.unique(lab) if i]
    assert len(ids) >= 2
    perm = {a: b for a, b in zip(ids, ids[::-1])}
    swapped = np.vectorize(lambda x: perm.get(x, x))(lab)
    prev_a = SegTensor.from_labelmap(lab, TINY.k_max)
    prev_b = SegTensor.from_labelmap(swapped, TINY.k_max)
    partial = SegTensor.empty(*v.shape, TINY.k_max)
    la = assignment_logits(asg, v.frames[1], v.proposals[1][0], prev_a, partial)
    lb = assignment_logits(asg, v.frames[1], v.proposals[1][0], prev_b, partial)
    for a, b in perm.items():
        assert la[a - 1] == pytest.approx(lb[b - 1], abs=1e-5)


def test_frame_log_prob_factorises(videos, nets):
    _, asg = nets
    rng = np.random.default_rng(0)
    n = 0
    for frame, props, prev in frame_cases(videos):
        fa = assign_frame(asg, frame, props, prev, mode="sample", rng=rng)
        # independent route: replay the chosen actions through full-length logits
        partial = SegTensor.empty(*frame.shape, TINY.k_max)
        total = 0.0
        for prop, s in zip(props, fa.steps):
            logits = assignment_logits(asg, frame, prop, prev, partial)
            finite = logits[np.isfinite(logits)]
            total += logits[s.action - 1] - logsumexp(finite)
            partial = partial.commit(prop.mask, s.action)
        if fa.steps:
            assert abs(fa.log_prob - total) <= 1e-6 * max(1.0, abs(total))
        n += 1
    assert n == 100


def test_factorised_policy_is_normalised(videos, nets):
    _, asg = nets
    frame, props, prev = next(frame_cases(videos[4:]))
    props = props[:3]
    total = 0.0

    def recurse(i, partial, logp):
        nonlocal total
        if i == len(props):
            total += np.exp(logp)
            return
        logits = assignment_logits(asg, frame, props[i], prev, partial)
        z = logits - logsumexp(logits[np.isfinite(logits)])
        for k in np.flatnonzero(np.isfinite(z)):
            recurse(i + 1, partial.commit(props[i].mask, int(k) + 1), logp + z[k])

    recurse(0, SegTensor.empty(*frame.shape, TINY.k_max), 0.0)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_batched_log_probs_match_rollout(videos, nets):
    _, asg = nets
    rng = np.random.default_rng(5)
    frame, props, prev = next(frame_cases(videos[5:]))
    fa = assign_frame(asg, frame, props, prev, mode="sample", rng=rng, keep_inputs=True)
    lp = batched_step_log_probs(asg, fa.steps).detach().numpy()
    assert np.allclose(lp, [s.log_prob for s in fa.steps], atol=1e-6)


def test_build_is_deterministic_and_isolated():
    state = torch.random.get_rng_state()
    a = build_nets(TINY, seed=9)
    b = build_nets(TINY, seed=9)
    assert torch.equal(state, torch.random.get_rng_state())
    for na, nb in zip(a, b):
        for pa, pb in zip(na.parameters(), nb.parameters()):
            assert torch.equal(pa, pb)


def test_parameter_count_independent_of_k_max():
    counts = set()
    for k in (2, 10, 40):
        cfg = ModelConfig(input_size=16, widths=TINY.widths, head=TINY.head, k_max=k)
        counts.add(count_parameters(build_nets(cfg)[1]))
    assert len(counts) == 1


def test_non_temporal_net_ignores_previous_masks(videos):
    _, asg = build_nets(TINY, seed=2, temporal=False)
    v = videos[6]
    partial = SegTensor.empty(*v.shape, TINY.k_max)
    a = SegTensor.from_labelmap(v.gt[0], TINY.k_max)
    b = SegTensor.from_labelmap(v.gt[5], TINY.k_max)
    assert np.array_equal(a.occupied(), b.occupied())
    la = assignment_logits(asg, v.frames[1], v.proposals[1][0], a, partial)
    lb = assignment_logits(asg, v.frames[1], v.proposals[1][0], b, partial)
    assert np.allclose(la, lb, atol=1e-6)


def test_slot_count_mismatch(videos, nets):
    _, asg = nets
    v = videos[0]
    wrong = SegTensor.empty(*v.shape, TINY.k_max + 1)
    with pytest.raises(ConfigurationError):
        assign_frame(asg, v.frames[0], v.proposals[0], wrong)


def test_degenerate_proposal_rejected(videos, nets):
    sel, _ = nets
    v = videos[0]
    bad = Proposal(np.zeros(v.shape, bool), BBox(0, 0, 0, 0), np.zeros(256, np.float32), 0.5)
    with pytest.raises(InvalidProposalError):
        select_proposals(sel, v.frames[0], [bad])
