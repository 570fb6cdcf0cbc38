from scorerd import conformance_check


def failed_names(report):
    return [c.name for c in report.checks if not c.passed]


class TestConformingSidecar:
    def test_stub_model_passes(self, sidecar_factory):
        svc = sidecar_factory(model_id="neg-length")
        report = conformance_check(svc.address, max_input_tokens=512)
        assert report.passed, report.format_lines()
        assert [c.name for c in report.checks] == [
            "healthz shape", "score length", "order alignment",
            "determinism", "empty candidates", "error shapes", "input truncation",
        ]

    def test_term_overlap_passes(self, sidecar_factory):
        svc = sidecar_factory(model_id="term-overlap", batch_size=2, max_input_tokens=64)
        report = conformance_check(svc.address, max_input_tokens=64)
        assert report.passed, report.format_lines()

    def test_truncation_check_optional(self, sidecar_factory):
        svc = sidecar_factory()
        report = conformance_check(svc.address)
        assert "input truncation" not in [c.name for c in report.checks]

    def test_report_formatting(self, sidecar_factory):
        svc = sidecar_factory()
        text = conformance_check(svc.address).format_lines()
        assert "PASS  healthz shape" in text
        assert text.strip().endswith("conformant")


class TestBrokenEndpoints:
    def test_reversed_scores_fail_alignment(self, broken_endpoint_factory):
        server = broken_endpoint_factory("reversed")
        report = conformance_check(server.address)
        assert not report.passed
        assert "order alignment" in failed_names(report)

    def test_dropped_score_fails_length(self, broken_endpoint_factory):
        server = broken_endpoint_factory("drop-one")
        report = conformance_check(server.address)
        assert "score length" in failed_names(report)

    def test_nondeterminism_detected(self, broken_endpoint_factory):
        server = broken_endpoint_factory("nondeterministic")
        report = conformance_check(server.address)
        assert "determinism" in failed_names(report)

    def test_bad_health_body(self, broken_endpoint_factory):
        server = broken_endpoint_factory("bad-health")
        report = conformance_check(server.address)
        assert "healthz shape" in failed_names(report)

    def test_500_on_bad_request_fails_error_shape(self, broken_endpoint_factory):
        server = broken_endpoint_factory("error-500")
        report = conformance_check(server.address)
        assert "error shapes" in failed_names(report)

    def test_unreachable_endpoint_reports_not_raises(self):
        report = conformance_check("http://127.0.0.1:9", timeout=0.5)
        assert not report.passed
        assert all(not c.passed for c in report.checks)
        assert "NOT conformant" in report.format_lines()
