"""Shell acquisition and structural ingest.

Three interchangeable sources produce the same shell lists for the same
content: an AASX package (ZIP with an ``aasx/manifest.json`` entry listing
shell document paths), a directory of canonical documents (read in sorted
file order), and a shell server speaking the REST contract
``GET {base}/shells`` -> JSON array of ids, ``GET {base}/shells/{id}`` ->
canonical document.

The production sequence comes from a JSON file, and the asset hierarchy is
built by recursively following bill-of-material references from a root
shell.
"""

from __future__ import annotations

import io
import json
import time
import urllib.error
import urllib.parse
import urllib.request
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .aas import AdministrationShell, extract_bom, parse_shell
from .errors import (
    AggregateShellError,
    ArchiveError,
    ConsistencyError,
    CycleError,
    DanglingReferenceError,
    DocumentSyntaxError,
    TransportError,
    TwinError,
    ValidationError,
)

MANIFEST_PATH = "aasx/manifest.json"


@dataclass(frozen=True)
class ProductionSequence:
    """Ordered process chain of assets within one production system."""

    system_id: str
    steps: tuple[str, ...]


@dataclass(frozen=True)
class HierarchyTree:
    """BOM-derived asset tree: every asset has at most one parent."""

    root_asset_id: str
    children: dict[str, tuple[str, ...]]

    def all_assets(self) -> tuple[str, ...]:
        """Assets in depth-first discovery order, root first."""
        order = []
        stack = [self.root_asset_id]
        while stack:
            current = stack.pop()
            order.append(current)
            stack.extend(reversed(self.children.get(current, ())))
        return tuple(order)

    def edge_count(self) -> int:
        return sum(len(c) for c in self.children.values())


# ---------------------------------------------------------------------------
# AASX packages


def read_aasx(source: bytes | str | Path) -> list[AdministrationShell]:
    """Read every shell of an AASX package, in manifest order."""
    if isinstance(source, (str, Path)):
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise ArchiveError(f"cannot read package: {exc}", path=str(source)) from exc
    else:
        data = source
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise ArchiveError(f"not a ZIP archive: {exc}") from exc

    names = set(archive.namelist())
    if MANIFEST_PATH not in names:
        raise ArchiveError(f"missing manifest entry {MANIFEST_PATH!r}", path=MANIFEST_PATH)
    try:
        manifest = json.loads(archive.read(MANIFEST_PATH).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ArchiveError(f"malformed manifest: {exc}", path=MANIFEST_PATH) from exc
    if not isinstance(manifest, list) or not all(isinstance(p, str) for p in manifest):
        raise ArchiveError("manifest must be a JSON array of entry paths", path=MANIFEST_PATH)
    if not manifest:
        raise ArchiveError("empty manifest", path=MANIFEST_PATH)

    shells = []
    for entry in manifest:
        if entry not in names:
            raise ArchiveError(f"manifest references missing entry {entry!r}", path=entry)
        text = archive.read(entry).decode("utf-8")
        try:
            shells.append(parse_shell(text))
        except TwinError as exc:
            exc.path = f"{entry}:{exc.path}" if exc.path else entry
            raise
    return shells


def write_aasx(shells_docs: dict[str, str], target: str | Path) -> None:
    """Pack canonical documents into an AASX package (manifest in key order).

    Entries get a fixed timestamp so identical content yields identical
    archive bytes.
    """

    def entry_info(name: str) -> zipfile.ZipInfo:
        return zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))

    with zipfile.ZipFile(target, "w", zipfile.ZIP_DEFLATED) as archive:
        archive.writestr(
            entry_info(MANIFEST_PATH), json.dumps(list(shells_docs), indent=2) + "\n"
        )
        for entry, text in shells_docs.items():
            archive.writestr(entry_info(entry), text)


def read_directory(directory: str | Path) -> list[AdministrationShell]:
    """Parse every *.json document in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ArchiveError(f"not a directory: {directory}", path=str(directory))
    shells = []
    for file in sorted(directory.glob("*.json")):
        try:
            shells.append(parse_shell(file.read_text(encoding="utf-8")))
        except TwinError as exc:
            exc.path = f"{file.name}:{exc.path}" if exc.path else file.name
            raise
    return shells


# ---------------------------------------------------------------------------
# Shell server client


def _http_get(url: str, *, retries: int, backoff: float, timeout: float) -> str:
    """GET with bounded retries; 5xx and connection errors back off and retry."""
    attempt = 0
    delay = backoff
    while True:
        attempt += 1
        try:
            with urllib.request.urlopen(url, timeout=timeout) as response:
                return response.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            if exc.code < 500 or attempt >= retries:
                raise TransportError(
                    f"GET {url} failed with HTTP {exc.code} after {attempt} attempt(s)",
                    path=url,
                ) from exc
        except (urllib.error.URLError, OSError) as exc:
            if attempt >= retries:
                raise TransportError(
                    f"GET {url} failed after {attempt} attempt(s): {exc}", path=url
                ) from exc
        time.sleep(delay)
        delay *= 2


def fetch_shells(
    endpoint: str,
    *,
    retries: int = 3,
    backoff: float = 0.1,
    parallelism: int = 4,
    timeout: float = 10.0,
) -> list[AdministrationShell]:
    """Fetch all shells hosted by a shell server, in listing order.

    Per-shell failures do not abort the run: the remaining shells are fetched
    and an AggregateShellError carrying both the successes and the per-shell
    errors is raised at the end.
    """
    base = endpoint.rstrip("/")
    listing_text = _http_get(f"{base}/shells", retries=retries, backoff=backoff, timeout=timeout)
    try:
        listing = json.loads(listing_text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"shell listing is not valid JSON: {exc}", path=f"{base}/shells") from exc
    if not isinstance(listing, list) or not all(isinstance(i, str) for i in listing):
        raise DocumentSyntaxError("shell listing must be a JSON array of id strings", path=f"{base}/shells")

    def fetch_one(shell_id: str) -> AdministrationShell:
        url = f"{base}/shells/{urllib.parse.quote(shell_id, safe='')}"
        text = _http_get(url, retries=retries, backoff=backoff, timeout=timeout)
        try:
            return parse_shell(text)
        except TwinError as exc:
            exc.path = f"{shell_id}:{exc.path}" if exc.path else shell_id
            raise

    results: list[AdministrationShell | None] = [None] * len(listing)
    failures: list[tuple[str, TwinError]] = []
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        futures = {pool.submit(fetch_one, sid): i for i, sid in enumerate(listing)}
        for future, index in futures.items():
            try:
                results[index] = future.result()
            except TwinError as exc:
                failures.append((listing[index], exc))

    shells = [s for s in results if s is not None]
    if failures:
        failures.sort(key=lambda pair: listing.index(pair[0]))
        failed_ids = ", ".join(shell_id for shell_id, _ in failures)
        raise AggregateShellError(
            f"{len(failures)} shell(s) failed to ingest: {failed_ids}",
            shells=shells,
            failures=failures,
        )
    return shells


# ---------------------------------------------------------------------------
# Production sequence


def load_sequence(text: str) -> ProductionSequence:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"malformed sequence file: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("sequence file must be a JSON object")
    system_id = obj.get("systemId")
    if not isinstance(system_id, str) or not system_id:
        raise ValidationError("sequence needs a non-empty systemId")
    steps = obj.get("steps")
    if not isinstance(steps, list) or not steps:
        raise ValidationError("sequence needs a non-empty steps list")
    if not all(isinstance(s, str) and s for s in steps):
        raise ValidationError("sequence steps must be non-empty strings")
    duplicates = {s for s in steps if steps.count(s) > 1}
    if duplicates:
        raise ValidationError(f"duplicate sequence steps: {sorted(duplicates)}")
    return ProductionSequence(system_id, tuple(steps))


# ---------------------------------------------------------------------------
# Hierarchy


def build_hierarchy(
    shells: list[AdministrationShell], root_asset_id: str
) -> HierarchyTree:
    """Recursively follow bill-of-material references starting at the root.

    Rejects cycles (CycleError listing the cycle path), references to
    shells that were never ingested (DanglingReferenceError) and assets
    claimed by more than one parent.
    """
    by_id = {s.id: s for s in shells}
    if root_asset_id not in by_id:
        raise DanglingReferenceError(
            f"root asset {root_asset_id!r} has no ingested shell", path=root_asset_id
        )

    children: dict[str, tuple[str, ...]] = {}
    visited: set[str] = set()
    stack: list[str] = []

    def visit(asset_id: str) -> None:
        if asset_id in stack:
            cycle = stack[stack.index(asset_id):] + [asset_id]
            raise CycleError(f"bill-of-material cycle: {' -> '.join(cycle)}", cycle=cycle)
        if asset_id in visited:
            raise ConsistencyError(
                f"asset {asset_id!r} is referenced by more than one parent",
                path=asset_id,
            )
        shell = by_id.get(asset_id)
        if shell is None:
            raise DanglingReferenceError(
                f"BOM references un-ingested shell {asset_id!r}", path=asset_id
            )
        visited.add(asset_id)
        stack.append(asset_id)
        child_ids = extract_bom(shell)
        children[asset_id] = child_ids
        for child in child_ids:
            visit(child)
        stack.pop()

    visit(root_asset_id)
    return HierarchyTree(root_asset_id, children)
