"""Prints one verdict line per acceptance criterion after the run.

The mapping is keyed by test function name so the summary works however
the tests were selected or parallelized within one process.
"""

CRITERIA = {
    "test_c1_ranking_metrics_match_oracles": (
        1, "ranking metrics match brute-force oracles on 1000 random instances"),
    "test_c2_objectness_never_exceeds_unknown_score": (
        2, "unknown objectness never exceeds the unknown score"),
    "test_c3_gradient_matches_finite_differences": (
        3, "analytic loss gradient matches central finite differences"),
    "test_c4_objectness_improves_both_training_settings": (
        4, "uos beats us on auroc and fpr95 in both training settings"),
    "test_c5_void_supervision_helps_average_precision": (
        5, "void-as-object supervision does not hurt average precision"),
    "test_c6_metrics_invariant_under_monotone_transforms": (
        6, "metrics bit-identical under monotone score transforms"),
    "test_c7_streaming_metrics_track_exact": (
        7, "streaming histogram metrics within 0.002 of exact"),
    "test_c8_tensor_round_trip": (
        8, "10000 random tensors round-trip bit for bit"),
    "test_c9_scoring_throughput": (
        9, "full-frame scoring under 250 ms single-threaded"),
}

_outcomes = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.split("::")[-1].split("[")[0]
    if name not in CRITERIA:
        return
    if report.when == "call":
        _outcomes[name] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        _outcomes.setdefault(name, "failed")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    seen = [(num, label, name) for name, (num, label) in CRITERIA.items() if name in _outcomes]
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, name in sorted(seen):
        verdict = "PASS" if _outcomes[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict} - {label}")
