"""Command-line interface: every pipeline stage as a subcommand.

Reports go to stdout (or --out) as canonical JSON carrying a run manifest;
artifacts (cubes, models, masks, CSV curves, figures) go to files.  All
stochastic components are driven by --seed (default 0, never entropy), so a
fixed command line reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import hsdata, ink, reporting, synth
from .bandeval import jsbs, knn_recognition, reconstruct_cube, reconstruction_error, sfbs
from .spca import (
    ALGORITHMS,
    AlternationConfig,
    fit,
    group_cardinality,
    lambda_max,
    load_basis,
    pca,
    penalty_for,
    save_basis,
)
from .prox import SolverConfig
from .treesearch import TreeConfig, tree_search

__all__ = ["main"]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(envelope, out_path) -> None:
    text = _canonical_json(envelope)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _alternation_config(args) -> AlternationConfig:
    inner = SolverConfig(max_iters=args.inner_max_iters, rel_tol=args.rel_tol)
    return AlternationConfig(outer_max=args.outer_max, epsilon=args.epsilon,
                             inner=inner, k=args.k,
                             spca_exact_l0=getattr(args, "l0", False))


def _binarization_params(args) -> ink.BinarizationParams:
    return ink.BinarizationParams(window=args.window, kappa=args.kappa,
                                  method=args.method,
                                  sauvola_variant=args.sauvola_variant,
                                  mask_band=args.band)


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (report_payload, parameters, input_paths)
# ---------------------------------------------------------------------------

def _cmd_synth(args):
    outputs = {}
    params = {"kind": args.kind, "noise_sigma": args.noise_sigma}
    if args.kind == "group-lowrank":
        groups = hsdata.GroupStructure.from_sizes([args.group_size] * args.bands)
        active = _int_list(args.active)
        dm = synth.synth_group_lowrank(args.n, groups, active,
                                       noise_sigma=args.noise_sigma, seed=args.seed)
        hsdata.save_matrix_csv(args.out, dm.uncentered(), groups)
        outputs["matrix"] = args.out
        params.update({"n": args.n, "bands": args.bands,
                       "group_size": args.group_size, "active_groups": active})
    elif args.kind == "ink-scene":
        spectra = synth.synth_ink_scene(args.n_per_ink, args.bands,
                                        args.separable_band, args.gap,
                                        noise_sigma=args.noise_sigma, seed=args.seed)
        hsdata.save_matrix_csv(args.out, spectra.spectra)
        hsdata.save_labels_csv(args.labels_out, spectra.labels)
        outputs["spectra"] = args.out
        outputs["labels"] = args.labels_out
        params.update({"n_per_ink": args.n_per_ink, "bands": args.bands,
                       "separable_band": args.separable_band, "gap": args.gap})
    else:  # ink-page
        ink_bands = None
        if args.ink1_band is not None and args.ink2_band is not None:
            ink_bands = (args.ink1_band, args.ink2_band)
        cube, truth = synth.synth_ink_page(
            width=args.width, height=args.height, bands=args.bands,
            n_strokes=args.strokes, ink_bands=ink_bands,
            ink_gap=args.gap, illum_floor=args.illum_floor,
            noise_sigma=args.noise_sigma, seed=args.seed)
        hsdata.save_cube(args.out, cube)
        hsdata.save_pgm(args.truth_out, truth)
        outputs["cube"] = args.out
        outputs["truth"] = args.truth_out
        params.update({"width": args.width, "height": args.height,
                       "bands": args.bands, "strokes": args.strokes,
                       "ink1_band": args.ink1_band, "ink2_band": args.ink2_band,
                       "gap": args.gap, "illum_floor": args.illum_floor})
    return {"kind": args.kind, "outputs": outputs}, params, []


def _cmd_fit(args):
    dm = hsdata.load_matrix_csv(args.data)
    config = _alternation_config(args)
    basis = fit(dm, args.algorithm, args.lam, config)
    save_basis(args.out, basis)
    if args.mean_out:
        reporting.write_curve_csv(args.mean_out, ["column_mean"],
                                  [[float(v)] for v in dm.column_mean])
    report = {
        "algorithm": basis.algorithm,
        "lambda": basis.lam,
        "k": basis.k,
        "converged": basis.converged,
        "iterations": basis.iterations_used,
        "cardinality": group_cardinality(basis.B, dm.groups),
        "objective": basis.history[-1]["objective"] if basis.history else None,
        "model": args.out,
    }
    params = {"algorithm": args.algorithm, "lambda": args.lam, "k": args.k,
              "outer_max": args.outer_max, "epsilon": args.epsilon,
              "exact_l0": args.l0}
    return report, params, [args.data]


def _cmd_tree_search(args):
    dm = hsdata.load_matrix_csv(args.data)
    config = TreeConfig(depth=args.depth, root_count=args.roots,
                        lambda_min=args.lambda_min, lambda_max=args.lambda_max,
                        spacing=args.spacing, fit_config=_alternation_config(args))
    result = tree_search(dm, args.algorithm, config)
    mapping = {}
    for r in sorted(result.models):
        rec = result.models[r]
        entry = {"lambda": rec.lam, "level": rec.node[0], "index": rec.node[1]}
        if args.save_models:
            Path(args.save_models).mkdir(parents=True, exist_ok=True)
            path = str(Path(args.save_models) / f"model_r{r:03d}.sbm")
            save_basis(path, rec.basis)
            entry["model"] = path
        mapping[str(r)] = entry
    nodes = result.table()
    report = {
        "algorithm": args.algorithm,
        "lambda_range": list(result.lambda_range),
        "spacing": args.spacing,
        "nodes": nodes,
        "map": mapping,
        "missing_cardinalities": result.missing,
        "fitted_count": result.fitted_count,
    }
    if args.csv:
        reporting.write_curve_csv(
            args.csv, ["level", "index", "lambda", "cardinality", "fitted"],
            [[n["level"], n["index"], float(n["lambda"]),
              -1 if n["cardinality"] is None else n["cardinality"],
              int(n["fitted"])] for n in nodes])
        report["csv"] = args.csv
    if args.plot_dir:
        Path(args.plot_dir).mkdir(parents=True, exist_ok=True)
        fig_path = str(Path(args.plot_dir) / "tree_nodes.png")
        reporting.plot_node_table(fig_path, nodes, f"{args.algorithm} tree search")
        report["figures"] = [fig_path]
    params = {"algorithm": args.algorithm, "depth": args.depth,
              "roots": args.roots, "spacing": args.spacing,
              "lambda_min": args.lambda_min, "lambda_max": args.lambda_max}
    return report, params, [args.data]


def _cmd_select_bands(args):
    raw, _ = hsdata.load_raw_csv(args.spectra)
    labels = hsdata.load_labels_csv(args.labels)
    unit, degenerate = hsdata.normalize_spectra(raw)
    spectra = hsdata.LabeledSpectra(unit, labels, num_inks=args.g,
                                    degenerate=degenerate)
    accuracy_fn = ink.make_cluster_accuracy_fn(g=args.g, seed=args.seed,
                                               restarts=args.restarts)
    if args.method == "sfbs":
        band_set = sfbs(spectra, accuracy_fn)
    else:
        if args.lam is None:
            raise ValueError("jsbs requires --lambda")
        band_set = jsbs(spectra, args.lam, accuracy_fn,
                        fit_config=AlternationConfig())
    report = {
        "method": args.method,
        "selected_bands": list(band_set.indices),
        "accuracy": band_set.achieved_accuracy,
    }
    if band_set.trace:
        report["trace"] = [{"band": s.band, "accuracy": s.accuracy}
                           for s in band_set.trace]
    if band_set.reduced_set:
        report["reduced_set"] = list(band_set.reduced_set)
    if args.csv:
        if band_set.trace:
            rows = [[s.band, float(s.accuracy)] for s in band_set.trace]
        else:
            rows = [[b, float(band_set.achieved_accuracy)] for b in band_set.indices]
        reporting.write_curve_csv(args.csv, ["band", "accuracy"], rows)
        report["csv"] = args.csv
    if args.plot_dir:
        Path(args.plot_dir).mkdir(parents=True, exist_ok=True)
        fig_path = str(Path(args.plot_dir) / f"{args.method}_trace.png")
        steps = report.get("trace") or [{"band": b, "accuracy": band_set.achieved_accuracy}
                                        for b in band_set.indices]
        reporting.plot_selection_trace(fig_path, steps, f"{args.method} selection")
        report["figures"] = [fig_path]
    params = {"method": args.method, "g": args.g, "lambda": args.lam,
              "restarts": args.restarts}
    return report, params, [args.spectra, args.labels]


def _cmd_reconstruct(args):
    cube = hsdata.load_cube(args.cube)
    basis = load_basis(args.model)
    train = hsdata.load_matrix_csv(args.train)
    cube_hat, active = reconstruct_cube(cube, basis, args.side, train.column_mean)
    hsdata.save_cube(args.out, cube_hat)
    test_dm = hsdata.extract_patches(cube, args.side, mean=train.column_mean)
    err = reconstruction_error(test_dm, basis)
    report = {"error": err, "active_bands": active, "output": args.out,
              "model": args.model, "side": args.side}
    params = {"side": args.side}
    return report, params, [args.cube, args.model, args.train]


def _cmd_eval_recon(args):
    train = hsdata.load_matrix_csv(args.train)
    if args.test:
        test_raw, _ = hsdata.load_raw_csv(args.test)
        test = hsdata.DataMatrix.from_raw(test_raw, train.groups,
                                          mean=train.column_mean)
        test_paths = [args.test]
    else:
        test = train
        test_paths = []
    model_paths = sorted(str(p) for p in Path(args.models).glob("*.sbm")) \
        if args.models else list(args.model or [])
    if not model_paths:
        raise ValueError("no models given: use --models DIR or --model FILE")
    gallery_labels = probe_labels = None
    if args.train_labels and args.test_labels:
        gallery_labels = hsdata.load_labels_csv(args.train_labels)
        probe_labels = hsdata.load_labels_csv(args.test_labels)
        test_paths += [args.train_labels, args.test_labels]
    curve = []
    for path in model_paths:
        basis = load_basis(path)
        entry = {
            "cardinality": group_cardinality(basis.B, train.groups),
            "lambda": basis.lam,
            "error": reconstruction_error(test, basis),
            "model": path,
        }
        if gallery_labels is not None:
            entry["accuracy"] = knn_recognition(
                train.uncentered(), gallery_labels,
                test.values + train.column_mean, probe_labels, basis,
                train_mean=train.column_mean)
        curve.append(entry)
    curve.sort(key=lambda e: (e["cardinality"], e["lambda"]))
    report = {"curve": curve}
    if args.csv:
        header = ["cardinality", "lambda", "error"]
        if gallery_labels is not None:
            header.append("accuracy")
        rows = [[e["cardinality"], float(e["lambda"]), float(e["error"])]
                + ([float(e["accuracy"])] if gallery_labels is not None else [])
                for e in curve]
        reporting.write_curve_csv(args.csv, header, rows)
        report["csv"] = args.csv
    if args.plot_dir:
        Path(args.plot_dir).mkdir(parents=True, exist_ok=True)
        figures = []
        xs = [e["cardinality"] for e in curve]
        err_path = str(Path(args.plot_dir) / "reconstruction_error.png")
        reporting.plot_curve(err_path, xs, [e["error"] for e in curve],
                             "group cardinality r", "reconstruction error",
                             "reconstruction error vs selected bands")
        figures.append(err_path)
        if gallery_labels is not None:
            acc_path = str(Path(args.plot_dir) / "recognition_accuracy.png")
            reporting.plot_curve(acc_path, xs, [e["accuracy"] for e in curve],
                                 "group cardinality r", "recognition accuracy",
                                 "recognition accuracy vs selected bands")
            figures.append(acc_path)
        report["figures"] = figures
    params = {"models": args.models, "model": args.model}
    return report, params, [args.train] + test_paths + model_paths


def _cmd_ink_detect(args):
    cube = hsdata.load_cube(args.cube)
    params_obj = _binarization_params(args)
    truth = hsdata.load_pgm(args.truth).astype(np.intp) if args.truth else None
    bands = _int_list(args.bands) if args.bands else None
    result = ink.detect(cube, params_obj, g=args.g, band_set=bands,
                        seed=args.seed, truth_labels=truth,
                        restarts=args.restarts)
    inputs = [args.cube] + ([args.truth] if args.truth else [])
    report = {
        "mask_band": result.mask_band,
        "bands_used": list(result.bands_used),
        "n_ink_pixels": result.n_ink_pixels,
        "blank": result.blank,
        "inertia": result.inertia,
        "accuracy": result.accuracy,
        "degenerate_pixels": result.degenerate_pixels,
    }
    if args.out_labels:
        hsdata.save_pgm(args.out_labels, result.predicted_image)
        report["predicted_labels"] = args.out_labels
    if args.plot_dir:
        Path(args.plot_dir).mkdir(parents=True, exist_ok=True)
        fig_path = str(Path(args.plot_dir) / "predicted_inks.png")
        reporting.plot_label_image(fig_path, result.predicted_image,
                                   "predicted ink labels")
        report["figures"] = [fig_path]
    params = {"g": args.g, "bands": bands, "method": args.method,
              "kappa": args.kappa, "window": args.window,
              "sauvola_variant": args.sauvola_variant, "band": args.band,
              "restarts": args.restarts}
    return report, params, inputs


def _cmd_segment(args):
    cube = hsdata.load_cube(args.cube)
    params_obj = _binarization_params(args)
    band = args.band if args.band is not None else ink.pick_mask_band(cube)
    result = ink.binarize(cube.band(band), params_obj)
    hsdata.save_pgm(args.out, result.ink_mask)
    report = {
        "mask_band": band,
        "method": args.method,
        "sauvola_variant": args.sauvola_variant if args.method == "sauvola" else None,
        "ink_density": float(result.ink_mask.mean()),
        "blank": result.blank,
        "mask": args.out,
    }
    params = {"method": args.method, "kappa": args.kappa, "window": args.window,
              "sauvola_variant": args.sauvola_variant, "band": args.band}
    return report, params, [args.cube]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_fit_options(p):
    p.add_argument("--k", type=int, default=None, help="basis width (default: p)")
    p.add_argument("--outer-max", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--inner-max-iters", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-7)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0,
                   help="seed for every stochastic component (default 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="cap on internal parallelism (results are identical for any value)")
    p.add_argument("--out-report", dest="out_report", default=None,
                   help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseband",
        description="Sparse PCA band selection and ink analysis for hyperspectral data")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate synthetic data")
    p.add_argument("--kind", required=True,
                   choices=["group-lowrank", "ink-scene", "ink-page"])
    p.add_argument("--out", required=True, help="primary output file")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--group-size", type=int, default=9)
    p.add_argument("--active", default="0,1", help="comma-separated active groups")
    p.add_argument("--n-per-ink", type=int, default=150)
    p.add_argument("--separable-band", type=int, default=0,
                   help="ink-scene: band where the class means differ")
    p.add_argument("--ink1-band", type=int, default=None,
                   help="ink-page: band raised for ink 1")
    p.add_argument("--ink2-band", type=int, default=None,
                   help="ink-page: band raised for ink 2")
    p.add_argument("--gap", type=float, default=0.5)
    p.add_argument("--labels-out", default="labels.csv")
    p.add_argument("--truth-out", default="truth.pgm")
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--strokes", type=int, default=14)
    p.add_argument("--illum-floor", type=float, default=0.55)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="learn one sparse basis")
    p.add_argument("--data", required=True, help="matrix CSV")
    p.add_argument("--algorithm", required=True, choices=list(ALGORITHMS))
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True, help="output .sbm model")
    p.add_argument("--mean-out", default=None, help="write training column means CSV")
    p.add_argument("--l0", action="store_true",
                   help="spca only: exact hard-threshold mode")
    _add_fit_options(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("tree-search", help="search the path for every cardinality")
    p.add_argument("--data", required=True)
    p.add_argument("--algorithm", required=True, choices=list(ALGORITHMS))
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--roots", type=int, default=4)
    p.add_argument("--lambda-min", type=float, default=None)
    p.add_argument("--lambda-max", type=float, default=None)
    p.add_argument("--spacing", choices=["log", "linear"], default="log")
    p.add_argument("--save-models", default=None, help="directory for .sbm files")
    p.add_argument("--csv", default=None, help="node table CSV")
    p.add_argument("--plot-dir", default=None, help="render figures here")
    p.add_argument("--l0", action="store_true")
    _add_fit_options(p)
    _add_common(p)
    p.set_defaults(func=_cmd_tree_search)

    p = sub.add_parser("select-bands", help="SFBS / JSBS band selection")
    p.add_argument("--spectra", required=True, help="spectra CSV")
    p.add_argument("--labels", required=True, help="labels CSV")
    p.add_argument("--method", required=True, choices=["sfbs", "jsbs"])
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--g", type=int, default=2)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--csv", default=None, help="accuracy trace CSV")
    p.add_argument("--plot-dir", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_select_bands)

    p = sub.add_parser("reconstruct", help="compressively reconstruct a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="training matrix CSV (for means)")
    p.add_argument("--side", type=int, default=3)
    p.add_argument("--out", required=True, help="output .hsc cube")
    _add_common(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval-recon", help="error/accuracy curves over models")
    p.add_argument("--train", required=True)
    p.add_argument("--test", default=None, help="test matrix CSV (default: train)")
    p.add_argument("--models", default=None, help="directory of .sbm files")
    p.add_argument("--model", action="append", default=None, help="single .sbm (repeatable)")
    p.add_argument("--train-labels", default=None)
    p.add_argument("--test-labels", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--plot-dir", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_eval_recon)

    p = sub.add_parser("ink-detect", help="cluster ink pixels of a document cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--g", type=int, default=2)
    p.add_argument("--bands", default=None, help="comma-separated band subset")
    p.add_argument("--method", choices=["sauvola", "otsu"], default="sauvola")
    p.add_argument("--kappa", type=float, default=0.15)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--sauvola-variant", choices=list(ink.SAUVOLA_VARIANTS),
                   default="standard")
    p.add_argument("--band", type=int, default=None, help="mask band (default: auto)")
    p.add_argument("--truth", default=None, help="ground-truth label PGM")
    p.add_argument("--out-labels", default=None, help="predicted label PGM")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--plot-dir", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_ink_detect)

    p = sub.add_parser("segment", help="binarize one band to an ink mask PGM")
    p.add_argument("--cube", required=True)
    p.add_argument("--band", type=int, default=None)
    p.add_argument("--method", choices=["sauvola", "otsu"], default="sauvola")
    p.add_argument("--kappa", type=float, default=0.15)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--sauvola-variant", choices=list(ink.SAUVOLA_VARIANTS),
                   default="standard")
    p.add_argument("--out", required=True, help="output mask PGM (255 = ink)")
    _add_common(p)
    p.set_defaults(func=_cmd_segment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    start = time.perf_counter()
    try:
        report, params, input_paths = args.func(args)
        inputs = {str(p): _sha256(p) for p in input_paths}
    except (ValueError, OSError) as exc:
        print(f"sparseband {args.subcommand}: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "subcommand": args.subcommand,
        "parameters": params,
        "inputs": inputs,
        "seed": int(getattr(args, "seed", 0)),
        "version": __version__,
        "duration_sec": round(time.perf_counter() - start, 6),
    }
    _emit({"manifest": manifest, "report": report}, args.out_report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
