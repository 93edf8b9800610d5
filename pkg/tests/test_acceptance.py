"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report.  Everything here runs on synthetic fixtures and golden files only.
"""

import math
import time
from pathlib import Path

import numpy as np

from hiprune import (
    HiPruneConfig,
    ScoreVector,
    SegMask,
    SplitMix64,
    SynthSpec,
    TokenGrid,
    aggregate_scores,
    anchor_count,
    dispersion,
    flops_ratio,
    generate,
    iou_with_mask,
    normalized_layer_iou,
    oracle_prune,
    prefill_flops,
    preset,
    prune,
    prune_scores,
    rank_transform,
    select_registers,
)
from hiprune.costmodel import FITTED_TEXT_TOKENS

SCHEMES = ("cross4", "square8", "row2")
MODES = ("paper_intersect", "grid_aware", "clamp")

MEASURED_TFLOPS = {2880: 40.57, 640: 10.97, 320: 6.74, 160: 4.63}


def report(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {name}: {status}{'  ' + detail if detail else ''}")
    assert passed, f"{name}: {detail}"


def random_stack(stream: SplitMix64, max_side: int = 8):
    rows = int(stream.next_u64() % max_side) + 1
    cols = int(stream.next_u64() % max_side) + 1
    layers = int(stream.next_u64() % 3) + 2
    heads = int(stream.next_u64() % 2) + 1
    spec = SynthSpec(
        grid=TokenGrid(rows, cols),
        layers=layers,
        heads=heads,
        seed=stream.next_u64(),
    )
    return generate(spec)


def random_config(stream: SplitMix64, stack, scheme: str, mode: str) -> HiPruneConfig:
    n = stack.n_patches
    return HiPruneConfig(
        budget=int(stream.next_u64() % (n + 8)) + 1,
        object_layer=int(stream.next_u64() % stack.layers),
        alpha=(stream.next_u64() % 1001) / 1000.0,
        scheme=scheme,
        boundary_mode=mode,
    )


def test_oracle_equivalence_campaign():
    """pruner.prune matches the brute-force oracle on 1000+ random stacks
    across every scheme and boundary mode, in under a minute."""
    started = time.monotonic()
    stream = SplitMix64(0xACCE97)
    stacks = 1008
    mismatches = 0
    checked = 0
    for _ in range(stacks):
        stack = random_stack(stream)
        for scheme in SCHEMES:
            for mode in MODES:
                config = random_config(stream, stack, scheme, mode)
                fast = prune(stack, config).to_json_dict()
                slow = oracle_prune(stack, config).to_json_dict()
                checked += 1
                if fast != slow:
                    mismatches += 1
    elapsed = time.monotonic() - started
    report(
        "oracle equivalence",
        mismatches == 0 and checked == stacks * 9 and elapsed < 60.0,
        f"{checked} comparisons, {mismatches} mismatches, {elapsed:.1f}s",
    )


def test_budget_and_disjointness_invariants():
    """Budget exactness and group disjointness over 10^4 randomized runs."""
    stream = SplitMix64(0xB0D9E7)
    cases = 0
    failures = 0
    for _ in range(1250):
        stack = random_stack(stream)
        for _ in range(8):
            scheme = SCHEMES[int(stream.next_u64() % 3)]
            mode = MODES[int(stream.next_u64() % 3)]
            config = random_config(stream, stack, scheme, mode)
            selection = prune(stack, config)
            cases += 1
            expected = min(config.budget, stack.n_patches)
            anchors, buffers, registers = (
                set(selection.anchors),
                set(selection.buffers),
                set(selection.registers),
            )
            ok = (
                len(selection.retained) == expected
                and len(set(selection.retained)) == expected
                and not (anchors & buffers)
                and not (registers & (anchors | buffers))
                and all(0 <= i < stack.n_patches for i in selection.retained)
            )
            failures += 0 if ok else 1
    report(
        "budget exactness and disjointness",
        failures == 0 and cases >= 10_000,
        f"{cases} cases, {failures} violations",
    )


def test_anchor_count_arithmetic():
    """Stock budget gives four anchors; zero alpha degenerates to pure
    register selection equal to the top-budget last-layer ranking."""
    four = anchor_count(HiPruneConfig(budget=192, object_layer=9, alpha=0.1,
                                      scheme="cross4"))
    stack = generate(SynthSpec(grid=TokenGrid(8, 8), layers=3, heads=2, seed=71))
    config = HiPruneConfig(budget=20, object_layer=1, alpha=0.0)
    selection = prune(stack, config)
    top = select_registers(aggregate_scores(stack, stack.layers - 1), set(), 20)
    degenerate_ok = (
        selection.anchors == []
        and selection.buffers == []
        and selection.retained == top
    )
    report(
        "anchor count arithmetic",
        four == 4 and degenerate_ok,
        f"N_a={four}, zero-alpha matches top-20 registers: {degenerate_ok}",
    )


def test_rank_transform_documented_example():
    ranks = rank_transform(ScoreVector(np.array([0.2, 0.3, 0.5, 0.1]), 0))
    report(
        "rank transform example",
        ranks.values.tolist() == [1, 2, 3, 0],
        f"got {ranks.values.tolist()}",
    )


def test_flops_model_against_published_numbers():
    """One fitted prompt length reproduces all four published prefill
    measurements within 15%, and the extreme-pruning ratio is plausible."""
    spec = preset("llava-next-7b")
    errors = {}
    for tokens, measured in MEASURED_TFLOPS.items():
        estimate = prefill_flops(spec, tokens)
        errors[tokens] = abs(estimate / (measured * 1e12) - 1.0)
    ratio = flops_ratio(spec, 2880, 160)
    passed = (
        20 <= FITTED_TEXT_TOKENS <= 120
        and all(err <= 0.15 for err in errors.values())
        and 7.5 <= ratio <= 10.0
    )
    detail = (
        f"text_tokens={FITTED_TEXT_TOKENS}, "
        f"max err={max(errors.values()):.1%}, ratio={ratio:.2f}x"
    )
    report("flops model", passed, detail)


def test_planted_structure_recovery():
    """On 200 seeded fixtures every anchor lands inside the planted block,
    and deep layers disperse more than the object layer."""
    stream = SplitMix64(0x9A27ED)
    fixtures = 200
    anchor_hits = 0
    dispersion_hits = 0
    for _ in range(fixtures):
        side = int(stream.next_u64() % 3) + 8  # 8..10
        grid = TokenGrid(side, side)
        block_side = 4  # 16 cells covers the top-10% set of any such grid
        max_origin = side - block_side
        row = int(stream.next_u64() % (max_origin + 1))
        col = int(stream.next_u64() % (max_origin + 1))
        layers = int(stream.next_u64() % 3) + 4
        object_layer = int(stream.next_u64() % (layers - 2)) + 1
        spec = SynthSpec(
            grid=grid,
            layers=layers,
            heads=int(stream.next_u64() % 2) + 1,
            seed=stream.next_u64(),
            object_block=(row, col, block_side, block_side),
            object_layers=(object_layer, object_layer + 1),
            object_gain=4.0 + (stream.next_u64() % 100) / 25.0,
            deep_dispersion=True,
        )
        stack = generate(spec)
        block = set(spec.block_indices())
        budget = max(4, int(stream.next_u64() % grid.n_patches) + 1)
        config = HiPruneConfig(budget=budget, object_layer=object_layer,
                               alpha=(stream.next_u64() % 500) / 1000.0)
        selection = prune(stack, config)
        if set(selection.anchors) <= block:
            anchor_hits += 1
        deep = dispersion(aggregate_scores(stack, layers - 1), grid, 0.1)
        mid = dispersion(aggregate_scores(stack, object_layer), grid, 0.1)
        if deep > mid:
            dispersion_hits += 1
    report(
        "planted structure recovery",
        anchor_hits == fixtures and dispersion_hits == fixtures,
        f"anchors in block {anchor_hits}/{fixtures}, "
        f"dispersion ordering {dispersion_hits}/{fixtures}",
    )


def test_analysis_identities():
    grid = TokenGrid(1, 4)
    vec = ScoreVector(np.array([5.0, 0.0, 0.0, 4.0]), 0)
    top_mask = SegMask(grid=grid, values=np.array([True, False, False, True]))
    off_mask = SegMask(grid=grid, values=np.array([False, True, True, False]))
    identical = iou_with_mask(vec, top_mask, 0.5)
    disjoint = iou_with_mask(vec, off_mask, 0.5)

    stack = generate(SynthSpec(grid=TokenGrid(3, 3), layers=4, heads=2, seed=8))
    full_mask = SegMask(grid=stack.grid, values=np.ones(9, dtype=bool))
    mid_entry = normalized_layer_iou(stack, full_mask, layers=[0, 1, 2, 3])[2]

    spaced = dispersion(vec, grid, 0.5)  # tokens at (0,0) and (0,3)
    passed = (
        identical == 1.0
        and disjoint == 0.0
        and mid_entry == 1.0
        and spaced == 3.0
    )
    report(
        "analysis identities",
        passed,
        f"iou=({identical}, {disjoint}), mid={mid_entry}, dispersion={spaced}",
    )


def test_selection_invariance_under_monotone_transforms():
    """Strictly increasing score transforms never change the selection."""
    stream = SplitMix64(0x1274A5)
    transforms = (
        lambda v: 2.5 * v + 7.0,
        lambda v: v**3,
        lambda v: np.exp(v),
        lambda v: np.log1p(v),
        lambda v: np.sqrt(v),
    )
    cases = 1000
    failures = 0
    for trial in range(cases):
        rows = int(stream.next_u64() % 7) + 1
        cols = int(stream.next_u64() % 7) + 1
        grid = TokenGrid(rows, cols)
        n = grid.n_patches
        obj = ScoreVector(stream.uniforms(n) * 9.0, 0)
        last = ScoreVector(stream.uniforms(n) * 9.0, 1)
        config = HiPruneConfig(
            budget=int(stream.next_u64() % (n + 4)) + 1,
            object_layer=0,
            alpha=(stream.next_u64() % 1001) / 1000.0,
            scheme=SCHEMES[trial % 3],
            boundary_mode=MODES[trial % 9 // 3],
        )
        base = prune_scores(obj, last, grid, config)
        f = transforms[trial % len(transforms)]
        g = transforms[(trial + 2) % len(transforms)]
        mapped = prune_scores(
            ScoreVector(f(obj.values), 0),
            ScoreVector(g(last.values), 1),
            grid,
            config,
        )
        if base.to_json_dict() != mapped.to_json_dict():
            failures += 1
    report(
        "selection invariance",
        failures == 0,
        f"{cases} cases, {failures} selection changes",
    )


def test_nonreproducible_results_are_documented():
    """Full-model benchmark accuracy and hardware timings are declared out
    of scope in the README, replaced by the property suites here."""
    readme = (Path(__file__).parent.parent / "README.md").read_text(encoding="utf-8")
    needles = (
        "full VLM inference",
        "GPU",
        "benchmark accuracy",
        "latency",
        "VRAM",
        "throughput",
        "property",
    )
    missing = [n for n in needles if n.lower() not in readme.lower()]
    report(
        "non-reproducibility statement",
        not missing,
        f"missing from README: {missing}" if missing else "documented in README",
    )
