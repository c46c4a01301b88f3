"""
Command-line drivers: data generation, the eigensolver and learning pipelines, benchmarks and the report schema.

Every command writes a JSON report (default: <reports_dir>/<command>.json) and prints a short summary.
Exit codes: 0 success, 1 numerical failure (the report carries a diagnostic), 2 usage error.
"""
import logging
import os
from contextlib import nullcontext
from pathlib import Path
from typing import Annotated, Callable, Optional

import numpy as np
import typer
import uvicorn.logging
from pydantic import ValidationError
from threadpoolctl import threadpool_limits

from src.conf.config import settings
from src.entity.models import EigenMethod, KernelFamily, PointCloud
from src.exceptions.exceptions import RETURN_MSG, GraphToolkitError, NumericalError, ResourceError
from src.repository.datasets import gen_crescent_fullmoon, gen_spiral, gen_spiral_clusters, relabel_nearest_centers
from src.repository.images import image_repository, segment_palette
from src.repository.points import points_repository
from src.repository.reports import report_repository
from src.schemas.schemas import AllenCahnParams, CGOptions, FastsumParams, KernelSpec, Report
from src.services.bench import run_bench, run_scaling
from src.services.learn import align_labels
from src.services.pipelines import run_cluster, run_eigs, run_krr, run_segment, run_ssl_kernel, run_ssl_pf

logger = logging.getLogger(uvicorn.logging.__name__)

app = typer.Typer(help="Matrix-free kernel graph toolkit", no_args_is_help=True, pretty_exceptions_enable=False)

KernelOption = Annotated[KernelFamily, typer.Option("--kernel", help="Radial kernel family")]
SigmaOption = Annotated[Optional[float], typer.Option("--sigma", help="Gaussian / Laplacian RBF width")]
COption = Annotated[Optional[float], typer.Option("--c", help="Multiquadric shape parameter")]
NOption = Annotated[Optional[int], typer.Option("--N", help="Fast summation bandwidth (even)")]
MOption = Annotated[Optional[int], typer.Option("--m", help="NFFT window cut-off")]
POption = Annotated[Optional[int], typer.Option("--p", help="Boundary regularization smoothness")]
EpsBOption = Annotated[Optional[float], typer.Option("--eps-b", help="Boundary region width")]
SetupOption = Annotated[Optional[int], typer.Option("--setup", min=1, max=3, help="Preset 1 (N=16,m=2), 2 (N=32,m=4), 3 (N=64,m=7)")]
KOption = Annotated[int, typer.Option("--k", min=1, help="Number of eigenpairs")]
MethodOption = Annotated[EigenMethod, typer.Option("--method", help="Eigensolver")]
LOption = Annotated[int, typer.Option("--L", min=1, help="Nystrom sample size")]
NystromMOption = Annotated[Optional[int], typer.Option("--M", min=1, help="Sketch width of the hybrid Nystrom method")]
SeedOption = Annotated[int, typer.Option("--seed", help="Random seed")]
ThreadsOption = Annotated[int, typer.Option("--threads", min=0, help="Worker threads; 1 forces deterministic mode")]
ReferenceOption = Annotated[bool, typer.Option("--with-reference", help="Compare with a dense reference")]
OutOption = Annotated[Optional[Path], typer.Option("--out", help="Report path")]
InOption = Annotated[Path, typer.Option("--in", exists=True, dir_okay=False, help="Input CSV (or image for segment)")]


def configure(threads: int) -> None:
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(message)s")
    if os.environ.get("FGS_DETERMINISTIC") == "1" or threads == 1:
        settings.fgs_deterministic = True
    settings.threads = threads


def build_kernel(family: KernelFamily, sigma: float | None, c: float | None) -> KernelSpec:
    try:
        return KernelSpec(family=family, sigma=sigma, c=c)
    except ValidationError as error:
        raise typer.BadParameter(_first_error(error), param_hint="--sigma/--c")


def build_params(setup: int | None, N: int | None, m: int | None, p: int | None, eps_b: float | None,
                 default_setup: int = 2) -> FastsumParams:
    """
    Fast summation parameters from a preset, overridden by explicit --N/--m/--p/--eps-b.
    """
    base = FastsumParams.setup(setup or default_setup, eps_b or 0.0)
    values = {"N": N or base.N, "m": m or base.m, "p": p, "eps_b": eps_b if eps_b is not None else base.eps_b}
    if values["p"] is None and N is None and m is None:
        values["p"] = base.p
    try:
        return FastsumParams(**values)
    except ValidationError as error:
        raise typer.BadParameter(_first_error(error), param_hint="--N/--m/--p/--eps-b")


def _first_error(error: ValidationError) -> str:
    return error.errors()[0]["msg"]


def _echo_parameters(values: dict) -> dict:
    return {key: str(value) if isinstance(value, Path) else value for key, value in values.items()}


def load_cloud(path: Path) -> PointCloud:
    try:
        return points_repository.load_points_csv(path)
    except GraphToolkitError as error:
        raise typer.BadParameter(str(error), param_hint="--in")


def summarize(report: Report, path: Path) -> None:
    lines = [f"{report.command} [{report.status}] report: {path}"]
    if report.eigenvalues:
        lines.append("eigenvalues: " + ", ".join(f"{value:.10f}" for value in report.eigenvalues))
    for name in ("max_eigenvalue_error", "max_residual_norm", "classification_rate", "misclassification_rate",
                 "iterations", "scaling_ratio"):
        value = getattr(report, name)
        if value is not None:
            lines.append(f"{name}: {value}")
    if report.diagnostic:
        lines.append(f"diagnostic: {report.diagnostic}")
    typer.echo("\n".join(lines))


def execute(command: str, parameters: dict, out: Path | None, run: Callable[[], Report]) -> Report:
    """
    Runs a pipeline and writes its report. Numerical failures write a failed report and exit with 1, invalid
    parameters exit with 2.
    """
    limits = threadpool_limits(limits=1) if settings.fgs_deterministic else nullcontext()
    try:
        with limits:
            report = run()
    except (NumericalError, ResourceError) as error:
        logger.error(f"{command} failed: {error}")
        report = Report(command=command, status="failed", parameters=parameters, seed=parameters.get("seed"),
                        diagnostic=f"{type(error).__name__}: {error}")
        summarize(report, report_repository.save(report, out))
        raise typer.Exit(code=1)
    except (GraphToolkitError, ValueError) as error:
        typer.echo(f"Error: {error}", err=True)
        raise typer.Exit(code=2)
    report = report.model_copy(update={"parameters": parameters | report.parameters})
    path = report_repository.save(report, out)
    summarize(report, path)
    return report


@app.command("gen")
def cmd_gen(out: Annotated[Path, typer.Option("--out", help="CSV to write")],
            spiral: Annotated[bool, typer.Option("--spiral", help="Interleaved 3-D spirals")] = False,
            crescent: Annotated[bool, typer.Option("--crescent", help="2-D crescent and full moon")] = False,
            spiral_clusters: Annotated[bool, typer.Option("--spiral-clusters",
                                                          help="Normal clouds around helix centers, nearest-center labels")] = False,
            classes: Annotated[int, typer.Option("--classes", min=1)] = 5,
            per_class: Annotated[int, typer.Option("--per-class", min=1)] = 400,
            n: Annotated[int, typer.Option("--n", min=4, help="Crescent size")] = 10000,
            nearest_centers: Annotated[Optional[int], typer.Option("--nearest-centers", min=1,
                                                                   help="Relabel by the nearest of this many centers")] = None,
            seed: SeedOption = 0):
    """Generate a labeled point cloud as CSV."""
    if spiral + crescent + spiral_clusters != 1:
        raise typer.BadParameter(RETURN_MSG.dataset_choice)
    configure(0)
    if spiral_clusters:
        cloud = gen_spiral_clusters(classes, per_class, seed=seed)
    else:
        cloud = gen_spiral(classes, per_class, seed=seed) if spiral else gen_crescent_fullmoon(n, seed=seed)
    if nearest_centers:
        cloud = relabel_nearest_centers(cloud, nearest_centers, seed)
    points_repository.save_points_csv(cloud, out)
    typer.echo(f"{cloud.provenance}: n={cloud.n} d={cloud.d} written to {out}")


@app.command("eigs")
def cmd_eigs(source: InOption, kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = None,
             c: COption = None, N: NOption = None, m: MOption = None, p: POption = None, eps_b: EpsBOption = None,
             setup: SetupOption = None, k: KOption = 10, method: MethodOption = EigenMethod.nfft_lanczos,
             L: LOption = 50, M: NystromMOption = None, seed: SeedOption = 0, threads: ThreadsOption = 0,
             with_reference: ReferenceOption = False, out: OutOption = None):
    """Leading eigenpairs of the normalized adjacency matrix."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec, params, cloud = build_kernel(kernel, sigma, c), build_params(setup, N, m, p, eps_b), load_cloud(source)
    execute("eigs", parameters, out,
            lambda: run_eigs(cloud, spec, params, method, k, L, M, seed, with_reference)[0])


@app.command("cluster")
def cmd_cluster(source: InOption, clusters: Annotated[int, typer.Option("--clusters", min=2)],
                kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = None, c: COption = None,
                N: NOption = None, m: MOption = None, p: POption = None, eps_b: EpsBOption = None,
                setup: SetupOption = None, k: KOption = 10, method: MethodOption = EigenMethod.nfft_lanczos,
                L: LOption = 50, seed: SeedOption = 0, threads: ThreadsOption = 0,
                labels_out: Annotated[Optional[Path], typer.Option("--labels-out")] = None, out: OutOption = None):
    """Spectral clustering: k-means on the rows of the leading eigenvectors."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec, params, cloud = build_kernel(kernel, sigma, c), build_params(setup, N, m, p, eps_b), load_cloud(source)

    def run() -> Report:
        report, labels = run_cluster(cloud, spec, params, method, k, clusters, seed, L)
        if labels_out:
            points_repository.save_labels_csv(labels, labels_out)
            report.outputs["labels"] = str(labels_out)
        return report

    execute("cluster", parameters, out, run)


@app.command("segment")
def cmd_segment(source: InOption, k: KOption = 4, sigma: Annotated[float, typer.Option("--sigma")] = 90.0,
                N: NOption = 16, m: MOption = 2, p: POption = 2, eps_b: EpsBOption = 0.125, seed: SeedOption = 0,
                threads: ThreadsOption = 0, with_reference: ReferenceOption = False,
                image_out: Annotated[Optional[Path], typer.Option("--image-out", help="Segmentation PNG/PPM")] = None,
                difference_out: Annotated[Optional[Path], typer.Option("--difference-out",
                                                                       help="Difference to the dense segmentation")] = None,
                out: OutOption = None):
    """Image segmentation by spectral clustering of pixel colors (Gaussian kernel)."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec, params = build_kernel(KernelFamily.gaussian, sigma, None), build_params(None, N, m, p, eps_b)
    if difference_out and not with_reference:
        raise typer.BadParameter(RETURN_MSG.option_requires.format(option="--difference-out", required="--with-reference"))

    def run() -> Report:
        pixels = image_repository.read_image(source)
        height, width = pixels.shape[:2]
        report, labels, reference_labels = run_segment(pixels, spec, params, k, seed, with_reference)
        if image_out:
            palette = segment_palette(pixels.reshape(-1, 3).astype(float), labels, k)
            image_repository.labels_to_image(labels, width, height, palette, image_out)
            report.outputs["image"] = str(image_out)
        if difference_out and reference_labels is not None:
            matched = align_labels(labels, reference_labels)
            image_repository.difference_image(matched, reference_labels, width, height, difference_out)
            report.outputs["difference"] = str(difference_out)
        return report

    execute("segment", parameters, out, run)


@app.command("ssl-pf")
def cmd_ssl_pf(source: InOption, kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = None,
               c: COption = None, N: NOption = None, m: MOption = None, p: POption = None, eps_b: EpsBOption = None,
               setup: SetupOption = None, k: KOption = 5, method: MethodOption = EigenMethod.nfft_lanczos,
               L: LOption = 50, samples_per_class: Annotated[int, typer.Option("--samples-per-class", min=1)] = 10,
               tau: Annotated[float, typer.Option("--tau")] = 0.1,
               eps_ac: Annotated[float, typer.Option("--eps-ac")] = 10.0,
               omega0: Annotated[float, typer.Option("--omega0")] = 1e4,
               conv_c: Annotated[Optional[float], typer.Option("--conv-c", help="Convexity constant")] = None,
               tol: Annotated[float, typer.Option("--tol")] = 1e-10,
               max_steps: Annotated[int, typer.Option("--max-steps", min=1)] = 100,
               explicit_fidelity: Annotated[bool, typer.Option("--explicit-fidelity",
                                                               help="Lag the fidelity term one step")] = False,
               seed: SeedOption = 0, threads: ThreadsOption = 0,
               labels_out: Annotated[Optional[Path], typer.Option("--labels-out")] = None, out: OutOption = None):
    """Phase-field (Allen-Cahn) semi-supervised classification."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec, params, cloud = build_kernel(kernel, sigma, c), build_params(setup, N, m, p, eps_b), load_cloud(source)
    try:
        ac_params = AllenCahnParams(tau=tau, eps_ac=eps_ac, omega0=omega0, c=conv_c, tol=tol, max_steps=max_steps,
                                    implicit_fidelity=not explicit_fidelity)
    except ValidationError as error:
        raise typer.BadParameter(_first_error(error), param_hint="--tau/--eps-ac/--omega0/--conv-c/--tol")

    def run() -> Report:
        report, labels = run_ssl_pf(cloud, spec, params, k, samples_per_class, ac_params, seed, method, L)
        if labels_out:
            points_repository.save_labels_csv(labels, labels_out)
            report.outputs["labels"] = str(labels_out)
        return report

    execute("ssl-pf", parameters, out, run)


@app.command("ssl-kernel")
def cmd_ssl_kernel(source: InOption, kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = None,
                   c: COption = None, N: NOption = None, m: MOption = None, p: POption = None,
                   eps_b: EpsBOption = None, setup: SetupOption = None,
                   beta: Annotated[float, typer.Option("--beta", min=0.0)] = 1e4,
                   samples_per_class: Annotated[int, typer.Option("--samples-per-class", min=1)] = 25,
                   tol: Annotated[Optional[float], typer.Option("--tol", help="CG relative residual")] = None,
                   max_iter: Annotated[Optional[int], typer.Option("--max-iter", min=1)] = None,
                   truncated: Annotated[Optional[int], typer.Option("--truncated",
                                                                    help="Solve on this many eigenpairs instead of CG")] = None,
                   method: MethodOption = EigenMethod.nfft_lanczos, L: LOption = 50, seed: SeedOption = 0,
                   threads: ThreadsOption = 0, labels_out: Annotated[Optional[Path], typer.Option("--labels-out")] = None,
                   out: OutOption = None):
    """Kernel semi-supervised classification with (I + beta L_s) u = f."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec, params, cloud = build_kernel(kernel, sigma, c), build_params(setup, N, m, p, eps_b), load_cloud(source)
    cg = CGOptions(**{key: value for key, value in {"tol": tol, "max_iter": max_iter}.items() if value is not None})

    def run() -> Report:
        report, labels = run_ssl_kernel(cloud, spec, params, samples_per_class, beta, cg, seed, truncated, method, L)
        if labels_out:
            points_repository.save_labels_csv(labels, labels_out)
            report.outputs["labels"] = str(labels_out)
        return report

    execute("ssl-kernel", parameters, out, run)


@app.command("krr")
def cmd_krr(source: InOption, kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = None,
            c: COption = None, N: NOption = None, m: MOption = None, p: POption = None, eps_b: EpsBOption = None,
            setup: SetupOption = None, beta: Annotated[float, typer.Option("--beta", min=0.0)] = 1e-3,
            tol: Annotated[float, typer.Option("--tol", help="CG relative residual")] = 1e-8,
            exact: Annotated[bool, typer.Option("--exact", help="Exact kernel products instead of fast summation")] = False,
            grid: Annotated[int, typer.Option("--grid", min=0, help="Decision-function grid resolution (2-D)")] = 0,
            grid_out: Annotated[Optional[Path], typer.Option("--grid-out", help="CSV of grid predictions")] = None,
            threads: ThreadsOption = 0, out: OutOption = None):
    """Two-class kernel ridge regression."""
    parameters = _echo_parameters(locals())
    configure(threads)
    spec = build_kernel(kernel, sigma, c)
    params, cloud = build_params(setup, N, m, p, eps_b, default_setup=3), load_cloud(source)
    if grid_out and not grid:
        raise typer.BadParameter(RETURN_MSG.option_requires.format(option="--grid-out", required="--grid"))

    def run() -> Report:
        report, values = run_krr(cloud, spec, params, beta, CGOptions(tol=tol), exact, grid)
        if grid_out and values is not None:
            xs, ys, predictions = values
            gx, gy = np.meshgrid(xs, ys)
            table = PointCloud(np.column_stack([gx.ravel(), gy.ravel(), predictions.ravel()]), provenance="krr grid")
            points_repository.save_points_csv(table, grid_out)
            report.outputs["grid"] = str(grid_out)
        return report

    execute("krr", parameters, out, run)


@app.command("bench")
def cmd_bench(sizes: Annotated[list[int], typer.Option("--n", help="Problem sizes (repeatable)")] = [2000],
              methods: Annotated[list[EigenMethod], typer.Option("--method", help="Methods (repeatable)")] = [EigenMethod.nfft_lanczos],
              setups: Annotated[list[int], typer.Option("--setup", min=1, max=3, help="Presets (repeatable)")] = [2],
              Ls: Annotated[list[int], typer.Option("--L", min=1, help="Nystrom sample sizes (repeatable)")] = [50],
              M: NystromMOption = None, k: KOption = 10,
              kernel: KernelOption = KernelFamily.gaussian, sigma: SigmaOption = 3.5, c: COption = None,
              eps_b: EpsBOption = 0.0, repeats: Annotated[int, typer.Option("--repeats", min=1)] = 10,
              scaling: Annotated[bool, typer.Option("--scaling", help="Time single-thread matvecs instead")] = False,
              seed: SeedOption = 0, threads: ThreadsOption = 0, with_reference: ReferenceOption = False,
              out: OutOption = None):
    """
    Methods x sizes x seeds on 5-class spirals with min/avg/max of the eigenvalue error and residual norm,
    or, with --scaling, fast summation matvec time per size.
    """
    parameters = _echo_parameters(locals())
    configure(threads)
    spec = build_kernel(kernel, sigma, c)

    def factory(n: int) -> PointCloud:
        return gen_spiral(5, max(1, n // 5), seed=seed)

    if scaling:
        params = FastsumParams.setup(setups[0], eps_b or 0.0)
        execute("bench", parameters, out, lambda: run_scaling(factory, spec, sizes, params, seed=seed))
        return
    seeds = list(range(seed, seed + repeats))
    execute("bench", parameters, out,
            lambda: run_bench(factory, spec, sizes, methods, setups, Ls, seeds, k, M, eps_b or 0.0, with_reference))


@app.command("schema")
def cmd_schema(out: Annotated[Path, typer.Option("--out", help="Where to write the report JSON schema")] = Path("report.schema.json")):
    """Write the JSON schema every report validates against."""
    path = report_repository.write_schema(out)
    typer.echo(f"Report schema written to {path}")


if __name__ == "__main__":
    app()
