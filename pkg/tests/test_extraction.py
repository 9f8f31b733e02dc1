from __future__ import annotations

import hashlib
import re
import string

import pytest
from hypothesis import given, strategies as st

from commitdistill import extraction as ex
from commitdistill.gitio import Commit

from conftest import RepoBuilder

META = {"commit": "0123abcd", "author": "Dev One", "date": "2023-01-01T00:00:00+00:00", "source": "commit"}


def _commit(subject: str, body: str = "") -> Commit:
    return Commit(
        sha="a" * 40,
        author="Dev One",
        author_date="2023-01-01T00:00:00+00:00",
        subject=subject,
        body=body,
    )


class TestNormalize:
    def test_strips_code_fences(self):
        assert ex.normalize("Note: use X.\n```\ncode\n```") == "Note: use X."

    def test_identity_on_plain_text(self):
        assert ex.normalize("plain text") == "plain text"

    def test_strips_tags_and_collapses_spaces(self):
        assert ex.normalize("<b>must</b> be   set") == "must be set"

    def test_inline_code_and_stray_backticks_removed(self):
        out = ex.normalize("wrap `x.y()` and a stray ` tick")
        assert "`" not in out

    def test_line_structure_survives(self):
        assert ex.normalize("subject line\n\nbody   line") == "subject line\nbody line"


class TestRuleTable:
    def test_nine_rules_with_priors_in_band(self):
        assert len(ex.DEFAULT_RULES) == 9
        for rule in ex.DEFAULT_RULES:
            assert 0.65 <= rule.prior <= 0.95
            assert rule.pattern.groups == 1
            assert rule.pattern.flags & re.IGNORECASE
            assert rule.unit_type in ex.UNIT_TYPES

    def test_three_rules_per_type(self):
        by_type = {}
        for rule in ex.DEFAULT_RULES:
            by_type.setdefault(rule.unit_type, []).append(rule.name)
        assert {k: len(v) for k, v in by_type.items()} == {"fact": 3, "skill": 3, "pattern": 3}

    def test_fallback_prior_sits_below_the_band(self):
        assert ex.FALLBACK_PRIOR == 0.40
        assert ex.FALLBACK_PRIOR < min(rule.prior for rule in ex.DEFAULT_RULES)


class TestUnitId:
    def test_normalization_collapses_case_and_whitespace(self):
        assert ex.unit_id("fact", "X") == ex.unit_id("fact", "  x  ")

    def test_type_prefix_separates(self):
        assert ex.unit_id("fact", "X") != ex.unit_id("skill", "X")

    def test_known_digest(self):
        content = "when trying to link via intersphinx, a label must be used"
        expected = hashlib.sha1(f"fact::{content}".encode()).hexdigest()[:12]
        assert expected == "371f820cff69"
        assert ex.unit_id("fact", content) == expected


class TestIsStop:
    def test_boilerplate_phrase(self):
        assert ex.is_stop("see above") is True

    def test_content_words_pass(self):
        assert ex.is_stop("must pin urllib3 below 2.0") is False

    def test_all_stopword_content(self):
        for token in ("this", "should", "be", "it"):
            assert token in ex.STOP_WORDS
        assert ex.is_stop("this should be it") is True


class TestResolutionTail:
    def test_cue_appends(self):
        merged = ex.capture_resolution_tail(
            "Crash occurs when the pool is exhausted.", "Workaround: raise the pool size."
        )
        assert merged == "Crash occurs when the pool is exhausted. Workaround: raise the pool size."

    def test_no_cue_leaves_sentence(self):
        kept = ex.capture_resolution_tail(
            "Crash occurs when the pool is exhausted.", "Also updated docs."
        )
        assert kept == "Crash occurs when the pool is exhausted."

    def test_long_pair_truncates_at_word_boundary(self):
        first = "The request pipeline stalls badly whenever the keepalive window elapses mid flush."
        second = "Fixed by extending the keepalive budget and draining the pipeline before rotation begins."
        assert len(first) + len(second) + 1 > 140
        merged = ex.capture_resolution_tail(first, second)
        assert len(merged) <= 140
        assert not merged.endswith(" ")
        assert (first + " " + second).startswith(merged)


class TestSubstantivePattern:
    def test_named_failure_identifier_is_whitelisted(self):
        assert ex.is_substantive_pattern("NullPointerException") is True

    def test_issue_reference_subjects_are_rejected(self):
        assert ex.is_substantive_pattern("remove obsolete (#4783") is False
        assert ex.is_substantive_pattern("fix issue #1842") is False

    def test_failure_term_plus_content_words(self):
        assert ex.is_substantive_pattern("deadlock when two clients reconnect") is True

    def test_issue_domination(self):
        assert ex.is_substantive_pattern("gh-12 #34 #56 cleanup") is False


class TestExtractUnits:
    def test_intersphinx_constraint(self):
        text = "When trying to link via intersphinx, a label must be used."
        units = ex.extract_units(text, META)
        assert len(units) == 1
        assert units[0].unit_type == "fact"
        assert units[0].content == text
        assert units[0].meta == META

    def test_empty_input(self):
        assert ex.extract_units("", META) == []

    def test_issue_only_pattern_candidate_rejected(self):
        assert ex.extract_units("fix issue #1842", META) == []

    def test_candidate_fires_before_rejection(self):
        # the kernel-style branch matches, so the rejection is the filter's doing
        rule = next(r for r in ex.DEFAULT_RULES if r.name == "pattern-regression")
        match = rule.pattern.search("fix issue #1842")
        assert match is not None and match.group(1) == "fix issue #1842"

    def test_resolution_tail_joined_for_patterns(self):
        units = ex.extract_units(
            "Crash occurs when the pool is exhausted. Workaround: raise the pool size.",
            META,
        )
        contents = {u.unit_type: u.content for u in units}
        assert contents["pattern"] == (
            "Crash occurs when the pool is exhausted. Workaround: raise the pool size."
        )
        assert contents["skill"] == "raise the pool size."

    def test_fact_and_skill_share_content_with_distinct_ids(self):
        units = ex.extract_units(
            "Note: to avoid the legacy resolver use the pinned index.", META
        )
        assert {u.unit_type for u in units} == {"fact", "skill"}
        fact, skill = sorted(units, key=lambda u: u.unit_type)
        assert fact.content == skill.content
        assert fact.id != skill.id

    def test_rule_order_resolves_same_type_duplicates(self):
        units = ex.extract_units(
            "Note: the session cookie must always be signed before deployment.", META
        )
        assert len(units) == 1
        # fact-constraint is declared first, so its prior wins the dedup
        assert units[0].weight == 0.75

    def test_length_filters(self):
        assert ex.extract_units("Note: ok.", META) == []
        long_span = "must " + "x" * 400
        assert ex.extract_units(long_span, META) == []

    def test_stop_candidates_dropped(self):
        assert ex.extract_units("Workaround: see above.", META) == []

    def test_code_and_markup_never_reach_contents(self):
        units = ex.extract_units(
            "Note: the `session.verify` flag must stay <b>enabled</b> for pinned hosts.",
            META,
        )
        assert units
        for unit in units:
            assert "`" not in unit.content
            assert "<" not in unit.content

    def test_rules_must_be_nonempty(self):
        with pytest.raises(ValueError):
            ex.extract_units("text", META, rules=())


class TestSubjectFallback:
    def test_basic_fallback(self):
        unit = ex.subject_fallback_unit(_commit("redirect loop on 302 chain"))
        assert unit is not None
        assert unit.unit_type == "pattern"
        assert unit.weight == 0.40
        assert unit.content == "redirect loop on 302 chain"

    def test_body_lead_sentence_joins(self):
        unit = ex.subject_fallback_unit(
            _commit("redirect loop on 302 chain", "Seen when chasing a 302 ladder. More text.")
        )
        assert unit is not None
        assert unit.content == "redirect loop on 302 chain. Seen when chasing a 302 ladder."

    def test_merge_release_bot_subjects_refused(self):
        assert ex.subject_fallback_unit(_commit("Merge branch 'x'")) is None
        assert ex.subject_fallback_unit(_commit("v2.31.0")) is None
        assert ex.subject_fallback_unit(_commit("Bump urllib3 from 1 to 2")) is None

    def test_short_cleaned_subject_refused(self):
        assert ex.subject_fallback_unit(_commit("fix: tidy")) is None

    def test_cap_at_280_on_word_boundary(self):
        subject = "long subject " + "alpha beta gamma " * 10
        body = "And the first sentence keeps going " + "delta epsilon " * 20 + "."
        unit = ex.subject_fallback_unit(_commit(subject.strip(), body))
        assert unit is not None
        assert len(unit.content) <= 280
        assert not unit.content.endswith(" ")

    def test_not_emitted_when_rules_fire(self):
        commit = _commit("redirect loop on 302 chain", "TimeoutError appears during cold start.")
        units = ex.extract_commit_units(commit, fallback_enabled=True)
        assert [u.weight for u in units] == [0.90]


class TestExtractRepository:
    def test_empty_repository(self, tmp_path):
        from conftest import run_git

        repo = tmp_path / "empty"
        repo.mkdir()
        run_git(repo, "init", "-q", "-b", "main")
        assert ex.extract_repository(repo, max_count=10) == []

    def test_fixture_repo_matches_hand_oracle(self, repo_builder: RepoBuilder):
        repo_builder.commit("plain refactor")
        repo_builder.commit("Document constraint", "The cache must be warmed before requests land.")
        repo_builder.commit("wip")
        repo_builder.commit("Diagnose restarts", "OOMFailure happens when the heap cap is reached.")
        repo_builder.commit("chore: assets")
        units = ex.extract_repository(repo_builder.path, max_count=50, fallback_enabled=False)
        assert sorted((u.unit_type, u.content) for u in units) == [
            ("fact", "The cache must be warmed before requests land."),
            ("pattern", "OOMFailure happens when the heap cap is reached."),
        ]

    def test_fallback_units_fill_silent_commits_only(self, repo_builder: RepoBuilder):
        repo_builder.commit("rework resolver bootstrapping")
        repo_builder.commit("Document constraint", "The cache must be warmed before requests land.")
        with_fallback = ex.extract_repository(repo_builder.path, max_count=50, fallback_enabled=True)
        without = ex.extract_repository(repo_builder.path, max_count=50, fallback_enabled=False)
        extra = [u for u in with_fallback if u.id not in {x.id for x in without}]
        assert [(u.content, u.weight) for u in extra] == [("rework resolver bootstrapping", 0.40)]

    def test_determinism(self, repo_builder: RepoBuilder):
        repo_builder.commit("Document constraint", "The cache must be warmed before requests land.")
        first = ex.extract_repository(repo_builder.path, max_count=10)
        second = ex.extract_repository(repo_builder.path, max_count=10)
        assert first == second
        assert [u.id for u in first] == sorted(u.id for u in first)


def test_fallback_env_switch():
    assert ex.subject_fallback_enabled({}) is True
    assert ex.subject_fallback_enabled({"COMMITDISTILL_SUBJECT_FALLBACK": "0"}) is False
    assert ex.subject_fallback_enabled({"COMMITDISTILL_SUBJECT_FALLBACK": "1"}) is True


_prose = st.text(alphabet=string.ascii_letters + string.digits + " .,:#!?\n'", max_size=300)


@given(_prose)
def test_extraction_is_deterministic_and_dedupes(text: str):
    first = ex.extract_units(text, META)
    second = ex.extract_units(text, META)
    assert first == second
    ids = [u.id for u in first]
    assert len(ids) == len(set(ids))
    for unit in first:
        assert ex.MIN_CONTENT_LEN <= len(unit.content) <= ex.MAX_CONTENT_LEN
        assert unit.id == ex.unit_id(unit.unit_type, unit.content)


@given(st.text(alphabet=string.ascii_letters + " `<>/b.\n", max_size=200))
def test_no_markup_survives_extraction(text: str):
    for unit in ex.extract_units(text, META):
        assert "`" not in unit.content
        assert not re.search(r"</?[A-Za-z][^<>\n]*>", unit.content)
