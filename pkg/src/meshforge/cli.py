"""Command-line interface.

    meshforge serve      --bind HOST:PORT --repo DIR [--token T] [--console DIR]
    meshforge simplify   --target N --in FILE --out FILE [--report json]
    meshforge repo       add|query|stats
    meshforge bench      sweep --in FILE [--targets 500,800,...]
    meshforge session    run --script FILE [--auto-select first-detected]

Mesh files are read by extension: .mforge is compact binary, anything else
is treated as text OBJ.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backends import MockDetector, MockImageTo3D, MockSttTranslate, MockTextTo3D
from .decimate import SimplifyConfig, simplify, vertex_budget_sweep
from .embedding import HashingEmbeddingProvider
from .mesh import stats as mesh_stats
from .mesh import validate
from .meshio import BINARY_EXTENSION, read_mesh, write_mesh
from .pipeline import Backends, Pipeline, PipelineConfig, report_metrics
from .repository import AssetRepository
from .session import SessionState


def _read_mesh_file(path: str):
    p = Path(path)
    fmt = "compact-binary" if p.suffix == BINARY_EXTENSION else "text-obj"
    return read_mesh(p.read_bytes(), fmt)


def _write_mesh_file(mesh, path: str):
    p = Path(path)
    fmt = "compact-binary" if p.suffix == BINARY_EXTENSION else "text-obj"
    p.write_bytes(write_mesh(mesh, fmt))


@click.group()
def main():
    """Cache-backed 3D asset pipeline with quadric mesh simplification."""


@main.command()
@click.option("--bind", envvar="MFORGE_BIND", default="127.0.0.1:8775", show_default=True)
@click.option("--repo", "repo_path", envvar="MFORGE_REPO", default="./repo", show_default=True)
@click.option("--target", default=1000, show_default=True, help="Simplify budget for served assets.")
@click.option("--token", envvar="MFORGE_TOKEN", default=None, help="Shared-secret bearer token.")
@click.option("--console", "console_dir", default=None, help="Directory of built console assets.")
def serve(bind, repo_path, target, token, console_dir):
    """Run the HTTP gateway (mock backends unless wired otherwise)."""
    import uvicorn

    from .gateway import ApiConfig, create_app

    host, _, port = bind.partition(":")
    config = ApiConfig(
        bind=bind,
        repo_path=repo_path,
        simplify_target=target,
        auth_token=token,
        console_dir=console_dir,
    )
    app = create_app(config=config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8775), log_level="info")


@main.command("simplify")
@click.option("--target", default=1000, show_default=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_fmt", type=click.Choice(["json", "none"]), default="json",
              show_default=True)
@click.option("--no-preserve-boundary", is_flag=True, default=False)
def simplify_cmd(target, in_path, out_path, report_fmt, no_preserve_boundary):
    """Decimate a mesh to the target vertex budget."""
    try:
        mesh = _read_mesh_file(in_path)
        cfg = SimplifyConfig(
            target_vertices=target, preserve_boundary=not no_preserve_boundary
        )
        out, report = simplify(mesh, cfg)
        _write_mesh_file(out, out_path)
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc))
    if report_fmt == "json":
        click.echo(json.dumps(report.as_dict(), indent=2))


@main.group()
def repo():
    """Inspect and update an asset repository."""


@repo.command("add")
@click.option("--repo", "repo_path", envvar="MFORGE_REPO", required=True)
@click.option("--label", required=True)
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--source", type=click.Choice(["generated", "imported", "image-derived"]),
              default="imported", show_default=True)
def repo_add(repo_path, label, mesh_path, source):
    """Embed a label and store its mesh."""
    try:
        mesh = _read_mesh_file(mesh_path)
        report = validate(mesh)
        if not report.ok:
            raise click.ClickException(f"invalid mesh: {report.summary()}")
        store = AssetRepository(repo_path)
        record = store.add_mesh(label, mesh, HashingEmbeddingProvider(store.dimension),
                                source=source)
        store.close()
    except click.ClickException:
        raise
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"id": record.id, "label": record.label,
                           "mesh_ref": record.mesh_ref}))


@repo.command("query")
@click.option("--repo", "repo_path", envvar="MFORGE_REPO", required=True)
@click.option("--label", required=True)
@click.option("-k", default=5, show_default=True)
@click.option("--min-score", default=-1.0, show_default=True)
def repo_query(repo_path, label, k, min_score):
    """Similarity search by label."""
    try:
        store = AssetRepository(repo_path)
        provider = HashingEmbeddingProvider(store.dimension)
        hits = store.query_similar(provider.embed(label), k=k, min_score=min_score)
        rows = [
            {"id": h.record_id, "label": store.get(h.record_id).label,
             "score": round(h.score, 6)}
            for h in hits
        ]
        store.close()
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc))
    click.echo(json.dumps(rows, indent=2))


@repo.command("stats")
@click.option("--repo", "repo_path", envvar="MFORGE_REPO", required=True)
def repo_stats(repo_path):
    try:
        store = AssetRepository(repo_path)
        payload = store.stats()
        store.close()
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc))
    click.echo(json.dumps(payload, indent=2))


@main.group()
def bench():
    """Benchmarks."""


@bench.command("sweep")
@click.option("--in", "in_paths", multiple=True, type=click.Path(exists=True),
              help="Mesh file; repeatable.")
@click.option("--dir", "mesh_dir", type=click.Path(exists=True, file_okay=False),
              help="Directory of mesh files.")
@click.option("--targets", default="500,800,1000,1500,2000", show_default=True)
def bench_sweep(in_paths, mesh_dir, targets):
    """Vertex-budget sweep, one table row per target."""
    paths = [Path(p) for p in in_paths]
    if mesh_dir:
        d = Path(mesh_dir)
        paths += sorted(
            p for p in d.iterdir()
            if p.suffix in (BINARY_EXTENSION, ".obj") and p.is_file()
        )
    if not paths:
        raise click.ClickException("no input meshes (use --in or --dir)")
    try:
        budget_list = sorted(int(t) for t in targets.split(","))
    except ValueError:
        raise click.ClickException(f"bad --targets {targets!r}")
    rows = {t: {"target_vertices": t, "meshes": 0, "total_error": 0.0,
                "mean_final_vertices": 0.0, "mean_final_faces": 0.0,
                "mean_size_bytes": 0.0, "mean_wall_time_s": 0.0}
            for t in budget_list}
    try:
        for path in paths:
            mesh = _read_mesh_file(str(path))
            for rep in vertex_budget_sweep(mesh, budget_list):
                row = rows[rep.target_vertices]
                row["meshes"] += 1
                row["total_error"] += rep.total_error
                row["mean_final_vertices"] += rep.final_vertices
                row["mean_final_faces"] += rep.final_faces
                row["mean_size_bytes"] += rep.serialized_size_binary
                row["mean_wall_time_s"] += rep.wall_time_s
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc))
    n = len(paths)
    for row in rows.values():
        for key in ("mean_final_vertices", "mean_final_faces", "mean_size_bytes",
                    "mean_wall_time_s"):
            row[key] /= max(1, row["meshes"])
        row["mean_size_mb"] = row["mean_size_bytes"] / 1e6
    click.echo(json.dumps({"inputs": n, "rows": list(rows.values())}, indent=2))


@main.group()
def session():
    """Headless scripted sessions."""


def _build_pipeline_from_script(script: dict, repo_dir: str | None):
    repo_path = repo_dir or script.get("repo") or "./repo"
    store = AssetRepository(repo_path)
    provider = HashingEmbeddingProvider(store.dimension)
    backends = Backends(
        generator=MockTextTo3D(latency_s=float(script.get("generator_latency_s", 0.0))),
        image_generator=MockImageTo3D(
            latency_s=float(script.get("generator_latency_s", 0.0))
        ),
        detector=MockDetector(script.get("detections", {"default": []})),
        stt=MockSttTranslate(script.get("transcripts", {})),
    )
    config = PipelineConfig(
        simplify_target=int(script.get("simplify_target", 1000)),
        retrieval_delay_s=float(script.get("retrieval_delay_s", 0.0)),
        duplicate_threshold=float(script.get("duplicate_threshold", 0.92)),
    )
    pipe = Pipeline(store, provider, backends, config)
    for label in script.get("seed_repository", ()):
        mesh = MockTextTo3D().generate(label)
        reduced, _ = simplify(mesh, SimplifyConfig(target_vertices=config.simplify_target))
        store.add_mesh(label, reduced, provider, source="imported")
    return pipe


@session.command("run")
@click.option("--script", "script_path", required=True, type=click.Path(exists=True))
@click.option("--repo", "repo_dir", envvar="MFORGE_REPO", default=None,
              help="Override the script's repository path.")
@click.option("--auto-select", type=click.Choice(["first-detected"]), default=None,
              help="Headless testing only: pick the first detected label at Offers.")
def session_run(script_path, repo_dir, auto_select):
    """Replay scripted sessions and emit the metrics report."""
    try:
        script = json.loads(Path(script_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read script: {exc}")
    pipe = _build_pipeline_from_script(script, repo_dir)
    language = script.get("language", "en")
    sessions = []
    served = []
    try:
        for spec in script.get("sessions", []):
            s = pipe.new_session(spec.get("language", language))
            for event in spec.get("events", []):
                pipe.handle_event(s, event)
            if auto_select and s.state in (SessionState.OFFERS, SessionState.SUGGESTIONS):
                if s.menus and s.menus.detected:
                    pipe.handle_event(
                        s,
                        {"type": "selection", "menu": "detected",
                         "label": s.menus.detected[0]},
                    )
            sessions.append(s)
            if s.asset_id:
                record = pipe.repo.get(s.asset_id)
                mesh = pipe.repo.load_mesh(record)
                st = mesh_stats(mesh)
                served.append(
                    {"asset_id": record.id, "label": record.label,
                     "vertices": st.vertex_count, "faces": st.face_count,
                     "size_bytes": st.serialized_size_bytes["compact-binary"],
                     "valid": validate(mesh).ok}
                )
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(f"session run failed: {exc}")
    report = report_metrics(sessions, pipe.repo)
    payload = {
        "final_states": [s.state.value for s in sessions],
        "served_assets": served,
        "report": report,
    }
    click.echo(json.dumps(payload, indent=2))
    ok = sessions and all(s.state is SessionState.PRESENTING for s in sessions)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
