"""Command-line pipeline: scene generation, warping, meshing, conditioning,
attention, view classification, and evaluation.

Exit codes: 0 success, 2 missing input, 64 invalid configuration, 70
internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attention, conditioning, figures, geometry, metrics, scenes, surface, tensorio

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_BAD_CONFIG = 64
EXIT_INTERNAL = 70

MIN_DIM = 16


class ConfigError(ValueError):
    pass


class MissingInputError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# Scene directory layout
# ---------------------------------------------------------------------------

def _view_paths(scene_dir: Path, index: int) -> dict[str, Path]:
    stem = "view_%03d" % index
    return {
        "image": scene_dir / ("%s.png" % stem),
        "points": scene_dir / ("%s_points.moai" % stem),
        "mask": scene_dir / ("%s_mask.moai" % stem),
        "camera": scene_dir / ("%s_camera.txt" % stem),
    }


def write_camera(camera: geometry.CameraPose, path: Path) -> None:
    row_major = " ".join("%.17g" % v for v in camera.world_to_camera.ravel())
    intr = "%.17g %.17g %.17g %.17g" % (camera.fx, camera.fy, camera.cx, camera.cy)
    path.write_text(row_major + "\n" + intr + "\n")


def read_camera(path: Path) -> geometry.CameraPose:
    if not path.exists():
        raise MissingInputError(str(path))
    lines = path.read_text().splitlines()
    mat = np.array([float(x) for x in lines[0].split()]).reshape(4, 4)
    fx, fy, cx, cy = (float(x) for x in lines[1].split())
    return geometry.CameraPose(mat, fx, fy, cx, cy)


def load_view(scene_dir: Path, index: int):
    paths = _view_paths(scene_dir, index)
    for p in paths.values():
        if not p.exists():
            raise MissingInputError(str(p))
    camera = read_camera(paths["camera"])
    points = tensorio.read_tensor(paths["points"])
    mask = tensorio.read_tensor(paths["mask"]).astype(np.uint8)
    image = tensorio.load_image(paths["image"])
    pointmap = geometry.Pointmap(points, mask, image.astype(np.float64))
    return camera, pointmap, image


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def parse_config_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise MissingInputError(str(path))
    values = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("bad config line: %r" % line)
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def resolve_option(args, key: str, config: dict[str, str], default=None):
    """Flags win over config-file values, which win over defaults."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x != ""]


def _check_dims(height: int, width: int) -> None:
    if height < MIN_DIM or width < MIN_DIM:
        raise ConfigError("image dims must be at least %d" % MIN_DIM)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_scene_gen(args) -> int:
    config = parse_config_file(Path(args.config)) if args.config else {}
    seed = int(resolve_option(args, "seed", config, 0))
    views = int(resolve_option(args, "views", config, 4))
    height = int(resolve_option(args, "height", config, 64))
    width = int(resolve_option(args, "width", config, 64))
    primitives_n = int(resolve_option(args, "primitives", config, 3))
    _check_dims(height, width)
    out_dir = Path(resolve_option(args, "out_dir", config, "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = scenes.SceneSpec(
        seed=seed,
        primitive_count=primitives_n,
        camera_count=views,
        height=height,
        width=width,
    )
    prims, cameras = scenes.generate_scene(spec)
    for i, camera in enumerate(cameras):
        image, pointmap = scenes.render_groundtruth(prims, camera, height, width)
        paths = _view_paths(out_dir, i)
        tensorio.save_image(image, paths["image"])
        tensorio.write_tensor(pointmap.points, paths["points"])
        tensorio.write_tensor(pointmap.valid.astype(np.float32), paths["mask"])
        write_camera(camera, paths["camera"])
    print("wrote %d views to %s" % (len(cameras), out_dir))
    return EXIT_OK


def _load_references(scene_dir: Path, refs: list[int]):
    pointmaps = []
    for r in refs:
        _, pointmap, _ = load_view(scene_dir, r)
        pointmaps.append(pointmap)
    return pointmaps


def run_warp(scene_dir: Path, target: int, refs: list[int], out_dir: Path):
    target_cam, target_pm, _ = load_view(scene_dir, target)
    cloud = geometry.merge_pointmaps(_load_references(scene_dir, refs))
    h, w = target_pm.height, target_pm.width
    warped = geometry.project_points(cloud, target_cam, h, w)
    tensorio.write_tensor(warped.points, out_dir / "warp_points.moai")
    tensorio.write_tensor(warped.valid.astype(np.float32), out_dir / "warp_mask.moai")
    if warped.colors is not None:
        tensorio.write_tensor(warped.colors, out_dir / "warp_colors.moai")
    return cloud, warped, target_cam, (h, w)


def cmd_warp(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_warp(Path(args.scene_dir), args.target, _parse_int_list(args.refs), out_dir)
    print("wrote warp artifacts to %s" % out_dir)
    return EXIT_OK


def run_mesh(scene_dir: Path, refs: list[int], out_dir: Path, radii_override=None):
    pointmaps = _load_references(scene_dir, refs)
    cloud = geometry.merge_pointmaps(pointmaps)
    if radii_override:
        radii = list(radii_override)
    else:
        radii = surface.estimate_radii(cloud)
    ref_centers = np.stack(
        [read_camera(_view_paths(scene_dir, r)["camera"]).center for r in refs]
    )
    mesh = surface.ball_pivot(cloud, radii, orient_toward=ref_centers.mean(axis=0))
    tensorio.write_ply(
        out_dir / "mesh.ply", mesh.vertices, mesh.vertex_colors, mesh.faces
    )
    return cloud, mesh, radii


def cmd_mesh(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    radii = [float(x) for x in args.radii.split(",")] if args.radii else None
    _, mesh, used = run_mesh(
        Path(args.scene_dir), _parse_int_list(args.refs), out_dir, radii
    )
    print("mesh: %d faces, radii %s" % (mesh.num_faces, used))
    return EXIT_OK


def run_condition(
    mesh: surface.TriMesh,
    target_cam: geometry.CameraPose,
    dims: tuple[int, int],
    embed: conditioning.EmbedConfig,
    out_dir: Path,
):
    h, w = dims
    render = surface.rasterize_mesh(mesh, target_cam, h, w)
    kept = surface.normal_mask(render, target_cam)
    render = masked_render(render, kept)
    tensorio.write_tensor(render.pointmap.points, out_dir / "render_points.moai")
    tensorio.write_tensor(render.depth, out_dir / "render_depth.moai")
    tensorio.write_tensor(render.normals, out_dir / "render_normals.moai")
    tensorio.write_tensor(render.mask.astype(np.float32), out_dir / "render_mask.moai")
    cam_space = conditioning.camera_space_render(render, target_cam)
    condition = conditioning.assemble_target_condition(cam_space, embed)
    conditioning.write_condition(
        condition, out_dir / "condition.moai", out_dir / "condition_channels.txt"
    )
    return render, condition


def masked_render(render: surface.MeshRender, keep: np.ndarray) -> surface.MeshRender:
    """Restrict a render to the kept pixels, zeroing the sentinels."""
    keep = np.asarray(keep, dtype=np.uint8)
    sel = keep == 1
    pm = geometry.Pointmap(
        np.where(sel[..., None], render.pointmap.points, 0.0),
        keep,
        None
        if render.pointmap.colors is None
        else np.where(sel[..., None], render.pointmap.colors, 0.0),
    )
    return surface.MeshRender(
        pm,
        np.where(sel, render.depth, 0.0),
        np.where(sel[..., None], render.normals, 0.0),
        keep,
    )


def cmd_condition(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_dir = Path(args.scene_dir)
    target_cam, target_pm, _ = load_view(scene_dir, args.target)
    mesh_path = Path(args.mesh) if args.mesh else out_dir / "mesh.ply"
    if not mesh_path.exists():
        raise MissingInputError(str(mesh_path))
    verts, colors, faces = tensorio.read_ply(mesh_path)
    if colors is None:
        colors = np.ones_like(verts)
    normals = _face_normals(verts, faces)
    mesh = surface.TriMesh(verts, colors, faces, normals)
    embed = conditioning.EmbedConfig(args.embed_l, args.embed_base)
    run_condition(
        mesh, target_cam, (target_pm.height, target_pm.width), embed, out_dir
    )
    print("wrote condition artifacts to %s" % out_dir)
    return EXIT_OK


def _face_normals(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    if faces is None or len(faces) == 0:
        return np.zeros((0, 3))
    p0 = verts[faces[:, 0]]
    n = np.cross(verts[faces[:, 1]] - p0, verts[faces[:, 2]] - p0)
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    lengths[lengths == 0] = 1.0
    return n / lengths


def cmd_attend(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in (args.queries, args.keys, args.values):
        if not Path(name).exists():
            raise MissingInputError(name)
    q = tensorio.read_tensor(args.queries)
    k = tensorio.read_tensor(args.keys)
    v = tensorio.read_tensor(args.values)
    weights = attention.attention_weights(q, k, q.shape[1])
    if args.geometry_values:
        if not Path(args.geometry_values).exists():
            raise MissingInputError(args.geometry_values)
        v_geo = tensorio.read_tensor(args.geometry_values)
        bundle = attention.AttentionBundle(q, k, v)
        out = attention.cross_modal_attention(bundle, v_geo)
    else:
        out = attention.apply_attention(weights, v)
    tensorio.write_tensor(out, out_dir / "attend_output.moai")
    tensorio.write_tensor(weights, out_dir / "attend_weights.moai")
    print("wrote attention output to %s" % out_dir)
    return EXIT_OK


def cmd_classify(args) -> int:
    scene_dir = Path(args.scene_dir)
    target = read_camera(_view_paths(scene_dir, args.target)["camera"])
    refs = [
        read_camera(_view_paths(scene_dir, r)["camera"])
        for r in _parse_int_list(args.refs)
    ]
    result = geometry.classify_view(target, refs)
    lines = ["label=%s" % result.label]
    if result.witness is not None:
        lines.append(
            "alpha=" + ",".join("%.9g" % a for a in result.witness)
        )
    text = "\n".join(lines) + "\n"
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "classification.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict[str, str] = {}

    if args.pred_image:
        for p in (args.pred_image, args.gt_image):
            if not p or not Path(p).exists():
                raise MissingInputError(str(p))
        pred = tensorio.load_image(args.pred_image)
        gt = tensorio.load_image(args.gt_image)
        report["psnr"] = "%.6f" % metrics.psnr(pred, gt)
        report["ssim"] = "%.6f" % metrics.ssim(pred, gt)
        # LPIPS needs a pretrained network, deliberately not substituted.
        report["lpips"] = "n/a"
        figures.save_image_comparison(pred, gt, out_dir / "image_comparison.png")

    if args.pred_depth:
        for p in (args.pred_depth, args.gt_depth):
            if not p or not Path(p).exists():
                raise MissingInputError(str(p))
        pred_d = tensorio.read_tensor(args.pred_depth)
        gt_d = tensorio.read_tensor(args.gt_depth)
        if args.eval_mask:
            eval_mask = tensorio.read_tensor(args.eval_mask).astype(np.uint8)
        else:
            eval_mask = ((pred_d > 0) & (gt_d > 0)).astype(np.uint8)
        abs_rel, delta = metrics.depth_metrics(
            metrics.DepthPair(pred_d, gt_d, eval_mask)
        )
        report["abs_rel"] = "%.6f" % abs_rel
        report["delta_1_25"] = "%.6f" % delta
        if args.proj_mask:
            proj = tensorio.read_tensor(args.proj_mask).astype(np.uint8)
            recon, inpaint = metrics.split_masks(proj, eval_mask)
            for name, mask in (("recon", recon), ("inpaint", inpaint)):
                if mask.any():
                    a, d = metrics.depth_metrics(
                        metrics.DepthPair(pred_d, gt_d, mask)
                    )
                    report["abs_rel_%s" % name] = "%.6f" % a
                    report["delta_1_25_%s" % name] = "%.6f" % d
                else:
                    report["abs_rel_%s" % name] = "n/a"
                    report["delta_1_25_%s" % name] = "n/a"
        figures.save_depth_comparison(
            pred_d, gt_d, eval_mask, out_dir / "depth_comparison.png"
        )

    if not report:
        raise ConfigError("nothing to evaluate: pass image and/or depth pairs")

    keys = sorted(report)
    (out_dir / "report.txt").write_text(
        "".join("%s=%s\n" % (k, report[k]) for k in keys)
    )
    if args.csv:
        csv_path = Path(args.csv)
        new_file = not csv_path.exists()
        with open(csv_path, "a", newline="") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(keys)
            writer.writerow([report[k] for k in keys])
    for k in keys:
        print("%s=%s" % (k, report[k]))
    return EXIT_OK


def _pipeline_one_target(scene_dir, out_root, target, refs, embed, radii):
    out_dir = out_root / ("target_%03d" % target)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    cloud, warped, target_cam, dims = run_warp(scene_dir, target, refs, out_dir)
    timings["warp"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    _, mesh, used_radii = run_mesh(scene_dir, refs, out_dir, radii)
    timings["mesh"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    render, _ = run_condition(mesh, target_cam, dims, embed, out_dir)
    timings["condition"] = time.perf_counter() - t0

    manifest = [
        "target=%d" % target,
        "refs=%s" % ",".join(str(r) for r in refs),
        "cloud_points=%d" % len(cloud),
        "mesh_faces=%d" % mesh.num_faces,
        "radii=%s" % ",".join("%.9g" % r for r in used_radii),
        "warp_coverage=%d" % int(warped.valid.sum()),
        "render_coverage=%d" % int(render.mask.sum()),
    ]
    manifest += ["timing_%s=%.6f" % (k, timings[k]) for k in sorted(timings)]
    (out_dir / "manifest.txt").write_text("\n".join(manifest) + "\n")
    return out_dir


def cmd_pipeline(args) -> int:
    config = parse_config_file(Path(args.config)) if args.config else {}
    scene_dir = Path(resolve_option(args, "scene_dir", config, "."))
    out_root = Path(resolve_option(args, "out_dir", config, str(scene_dir)))
    targets_raw = resolve_option(args, "target", config)
    refs_raw = resolve_option(args, "refs", config)
    if targets_raw is None or refs_raw is None:
        raise ConfigError("pipeline requires --target and --refs")
    targets = _parse_int_list(targets_raw)
    refs = _parse_int_list(refs_raw)
    if not targets or not refs:
        raise ConfigError("targets and refs must be non-empty")
    if set(targets) & set(refs):
        raise ConfigError("a view cannot be both target and reference")
    embed_l = int(resolve_option(args, "embed_l", config, 4))
    embed_base = float(resolve_option(args, "embed_base", config, 2.0))
    embed = conditioning.EmbedConfig(embed_l, embed_base)
    radii_raw = resolve_option(args, "radii", config)
    radii = [float(x) for x in str(radii_raw).split(",")] if radii_raw else None
    out_root.mkdir(parents=True, exist_ok=True)

    max_workers = len(targets)
    env_cap = os.environ.get("MOAI_THREADS")
    if env_cap:
        max_workers = max(1, min(max_workers, int(env_cap)))
    if max_workers == 1 or len(targets) == 1:
        for t in targets:
            _pipeline_one_target(scene_dir, out_root, t, refs, embed, radii)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(
                    _pipeline_one_target, scene_dir, out_root, t, refs, embed, radii
                )
                for t in targets
            ]
            for fut in futures:
                fut.result()
    print("pipeline complete for targets %s" % targets)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moai", description="multi-view warping and conditioning toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-gen", help="generate a synthetic oracle scene")
    p.add_argument("--seed", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--primitives", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_scene_gen)

    p = sub.add_parser("warp", help="project reference pointmaps to a target view")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("mesh", help="ball-pivot the merged reference cloud")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--radii")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("condition", help="rasterize a mesh into conditions")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--mesh")
    p.add_argument("--embed-l", type=int, default=4)
    p.add_argument("--embed-base", type=float, default=2.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("attend", help="run aggregated / cross-modal attention")
    p.add_argument("--queries", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--geometry-values")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("classify", help="extrapolative vs interpolative target")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="image and geometry metrics with figures")
    p.add_argument("--pred-image")
    p.add_argument("--gt-image")
    p.add_argument("--pred-depth")
    p.add_argument("--gt-depth")
    p.add_argument("--eval-mask")
    p.add_argument("--proj-mask")
    p.add_argument("--csv")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="warp + mesh + condition for targets")
    p.add_argument("--scene-dir")
    p.add_argument("--target")
    p.add_argument("--refs")
    p.add_argument("--embed-l", type=int)
    p.add_argument("--embed-base", type=float)
    p.add_argument("--radii")
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MissingInputError, FileNotFoundError) as exc:
        print("missing input: %s" % exc, file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        print("invalid configuration: %s" % exc, file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:  # noqa: BLE001 - invariant breaches map to exit 70
        print("internal error: %s" % exc, file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
