"""Read commit history from a local git repository via the git executable.

Commits travel through a 0x1F/0x1E delimited wire format (ASCII unit and
record separators) so that newlines, tabs, and quotes inside commit bodies
round-trip losslessly. Messages that themselves contain those two control
bytes are rejected rather than silently corrupted.
"""
from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

FIELD_SEP = "\x1f"
RECORD_SEP = "\x1e"
_LOG_FORMAT = RECORD_SEP + FIELD_SEP.join(["%H", "%an", "%ad", "%s", "%b"])

_SHA_RE = re.compile(r"[0-9a-f]{40}")
_ISSUE_REF_RE = re.compile(r"\(?#\d+\)?")
_LEADING_TAG_RE = re.compile(r"^\s*\[[^\]]*\]\s*")
_CONVENTIONAL_PREFIX_RE = re.compile(r"^\s*(?:fix|bug|feat|chore)\s*:\s*", re.IGNORECASE)
_MERGE_SUBJECT_RE = re.compile(
    r"^\s*merge\s+(?:pull\s+request|(?:remote-tracking\s+)?branch)\b", re.IGNORECASE
)
_RELEASE_SUBJECT_RE = re.compile(
    r"^\s*(?:v?\d+(?:\.\d+)+\s*$|(?:prepare\s+)?release\b|bump\s+version\b|version\s+bump\b)",
    re.IGNORECASE,
)
_BOT_SUBJECT_RE = re.compile(
    r"dependabot|renovate|\[bot\]|^\s*bump\b.*\bfrom\b.*\bto\b", re.IGNORECASE
)
_WS_RE = re.compile(r"\s+")


class GitError(RuntimeError):
    """A git invocation failed; the message carries the captured stderr."""


class CommitParseError(GitError):
    """A commit message collides with the wire-format separator bytes."""


@dataclass
class Commit:
    """One git commit record."""

    sha: str
    author: str
    author_date: str  # ISO-8601 with UTC offset, exactly as git printed it
    subject: str
    body: str
    changed_files: set[str] | None = None  # populated lazily via changed_files()

    @property
    def short_sha(self) -> str:
        return self.sha[:8]

    @property
    def message(self) -> str:
        return f"{self.subject}\n{self.body}" if self.body else self.subject

    def author_datetime(self) -> datetime:
        return datetime.fromisoformat(self.author_date)


def _run_git(args: list[str], repo_path: Path | str) -> str:
    completed = subprocess.run(
        ["git", *args],
        cwd=str(repo_path),
        check=False,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        encoding="utf-8",
        errors="replace",
    )
    if completed.returncode != 0:
        detail = completed.stderr.strip() or f"git {' '.join(args)} exited {completed.returncode}"
        raise GitError(detail)
    return completed.stdout


def _ensure_repo(repo_path: Path | str) -> Path:
    path = Path(repo_path)
    if not path.is_dir():
        raise GitError(f"repository not found: {path}")
    try:
        _run_git(["rev-parse", "--git-dir"], path)
    except GitError as exc:
        raise GitError(f"not a git repository: {path} ({exc})") from exc
    return path


def _has_commits(repo_path: Path) -> bool:
    try:
        _run_git(["rev-parse", "--verify", "--quiet", "HEAD"], repo_path)
    except GitError:
        return False
    return True


def head_sha(repo_path: Path | str) -> str:
    """Full sha of HEAD; raises GitError on an empty or missing repository."""
    path = _ensure_repo(repo_path)
    return _run_git(["rev-parse", "HEAD"], path).strip()


def _parse_log(output: str) -> list[Commit]:
    commits: list[Commit] = []
    last_sha = "<none>"
    for record in output.split(RECORD_SEP):
        if not record:
            continue
        fields = record.split(FIELD_SEP)
        if len(fields) != 5 or not _SHA_RE.fullmatch(fields[0]):
            offender = fields[0] if _SHA_RE.fullmatch(fields[0]) else last_sha
            raise CommitParseError(
                f"commit {offender}: message contains wire-format separator bytes "
                "(0x1f/0x1e); refusing to parse"
            )
        sha, author, date, subject, body = fields
        last_sha = sha
        commits.append(
            Commit(
                sha=sha,
                author=author,
                author_date=date,
                subject=subject,
                body=body.rstrip("\n"),
            )
        )
    return commits


def _as_datetime(value: datetime | str) -> datetime:
    if isinstance(value, datetime):
        return value
    return datetime.fromisoformat(value)


def list_commits(
    repo_path: Path | str,
    max_count: int = 5000,
    before: datetime | str | None = None,
) -> list[Commit]:
    """Newest-first commits, at most ``max_count``.

    With ``before`` set, only commits whose *author* date is strictly earlier
    are returned; the filter runs on the parsed author date rather than on
    ``git log --before`` (which filters on commit date).
    """
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    path = _ensure_repo(repo_path)
    if not _has_commits(path):
        return []
    args = ["log", "--date=iso-strict", f"--pretty=format:{_LOG_FORMAT}"]
    if before is None:
        args += ["-n", str(max_count)]
    output = _run_git(args, path)
    commits = _parse_log(output)
    if before is not None:
        cutoff = _as_datetime(before)
        commits = [c for c in commits if c.author_datetime() < cutoff]
    return commits[:max_count]


def changed_files(repo_path: Path | str, sha: str) -> set[str]:
    """Name-only diff of a commit against its first parent.

    Root commits diff against the empty tree; an empty commit yields an
    empty set. Unknown shas raise GitError.
    """
    path = _ensure_repo(repo_path)
    try:
        _run_git(["rev-parse", "--verify", f"{sha}^{{commit}}"], path)
    except GitError as exc:
        raise GitError(f"unknown sha {sha}: {exc}") from exc
    try:
        _run_git(["rev-parse", "--verify", "--quiet", f"{sha}^1"], path)
    except GitError:
        output = _run_git(
            ["diff-tree", "--root", "-r", "--name-only", "--no-commit-id", sha], path
        )
    else:
        output = _run_git(["diff", "--name-only", f"{sha}^1", sha], path)
    return {line for line in output.splitlines() if line}


def changed_files_map(
    repo_path: Path | str, max_count: int | None = None
) -> dict[str, set[str]]:
    """First-parent changed-file sets for many commits in one git call."""
    path = _ensure_repo(repo_path)
    if not _has_commits(path):
        return {}
    args = [
        "log",
        "--diff-merges=first-parent",
        "--name-only",
        f"--pretty=format:{RECORD_SEP}%H",
    ]
    if max_count is not None:
        args += ["-n", str(max_count)]
    output = _run_git(args, path)
    result: dict[str, set[str]] = {}
    for record in output.split(RECORD_SEP):
        if not record:
            continue
        lines = record.splitlines()
        sha = lines[0].strip()
        result[sha] = {line for line in lines[1:] if line}
    return result


def clean_subject(subject: str) -> str:
    """Strip conventional prefixes, issue references, and merge boilerplate.

    Casing is preserved; whitespace is collapsed; the result may be empty.
    """
    if _MERGE_SUBJECT_RE.match(subject):
        return ""
    text = subject
    while True:
        stripped = _LEADING_TAG_RE.sub("", text, count=1)
        stripped = _CONVENTIONAL_PREFIX_RE.sub("", stripped, count=1)
        if stripped == text:
            break
        text = stripped
    text = _ISSUE_REF_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def is_bot_release_or_merge_subject(subject: str) -> bool:
    """True for merge boilerplate, release tags, and bot-authored subjects."""
    return bool(
        _MERGE_SUBJECT_RE.match(subject)
        or _RELEASE_SUBJECT_RE.match(subject)
        or _BOT_SUBJECT_RE.search(subject)
    )
