"""Command-line entry point.

Exit codes: 0 success, 1 configuration error (including bad flags),
2 data error, 3 a check that ran but failed.
"""

from __future__ import annotations

import json
import logging
import sys

import click

from .errors import ConfigError, DataError

EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 1, 2, 3


def _experiment_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key = value config file."),
        click.option("--mode", type=click.Choice(["centralized", "standalone", "federated"])),
        click.option("--K", "K", type=int, help="Number of clients."),
        click.option("--K-selected", "K_selected", type=int, help="Clients sampled per round."),
        click.option("--alpha", type=float, help="Heterogeneity level |2P_k - 1|."),
        click.option("--rounds", type=int),
        click.option("--seeds", type=str, help="e.g. 0-9 or 0,3,5"),
        click.option("--phishing-dir", type=str, help="Phishing .eml tree [env FEDPB_PHISHING_DIR]."),
        click.option("--legitimate-dir", type=str, help="Legitimate .eml tree [env FEDPB_LEGITIMATE_DIR]."),
        click.option("--embedding", type=str, help="GloVe-format text file [env FEDPB_EMBEDDING]."),
        click.option("--stopwords", type=str, help="Stop-word list, one per line [env FEDPB_STOPWORDS]."),
        click.option("--lemma-exceptions", type=str, help="'word lemma' lines [env FEDPB_LEMMA_EXCEPTIONS]."),
        click.option("--lr", type=float),
        click.option("--batch", type=int),
        click.option("--epochs-local", type=int),
        click.option("--patience", type=int),
        click.option("--max-epochs", type=int),
        click.option("--val-fraction", type=float),
        click.option("--hidden", type=int),
        click.option("--dense", type=int),
        click.option("--layers", type=int),
        click.option("--seq-len", type=int, help="Tokens kept per message."),
        click.option("--embed-dim", type=int, help="Embedding width; must match the file."),
        click.option("--synthetic-per-class", type=int, help="Synthetic corpus size per class."),
        click.option("--synthetic-seed", type=int),
        click.option("--standalone-eval-tail", type=int, help="Standalone epochs evaluated on test (0 = all)."),
        click.option("--out-dir", type=str),
        click.option("--checkpoint-every", type=int),
        click.option("--jobs", type=int, help="Worker processes for seeds."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _load(config_path, flags):
    from .harness.config import load_config

    return load_config(config_path, flags)


@click.group()
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Federated BiLSTM phishing-detection simulator."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")


@cli.command()
@click.option("--phishing-dir", envvar="FEDPB_PHISHING_DIR", required=True, type=click.Path(file_okay=False))
@click.option("--legitimate-dir", envvar="FEDPB_LEGITIMATE_DIR", required=True, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output JSON lines.")
@click.option("--tokens/--no-tokens", default=False, help="Also write preprocessed tokens.")
@click.option("--stopwords", envvar="FEDPB_STOPWORDS", type=click.Path(dir_okay=False))
@click.option("--lemma-exceptions", envvar="FEDPB_LEMMA_EXCEPTIONS", type=click.Path(dir_okay=False))
def ingest(phishing_dir, legitimate_dir, out, tokens, stopwords, lemma_exceptions):
    """Parse .eml trees into labeled plain-text JSON lines."""
    from .email_ingest import load_corpus
    from .text_pipeline import load_lexicon, preprocess

    try:
        lexicon = load_lexicon(stopwords, lemma_exceptions) if tokens else None
    except ValueError as exc:
        raise DataError(f"lexicon: {exc}") from exc
    phish, legit = load_corpus(phishing_dir, legitimate_dir)
    with open(out, "w", encoding="utf-8") as fh:
        for doc in phish + legit:
            rec = {"source_id": doc.source_id, "label": doc.label, "text": doc.text}
            if tokens:
                rec["tokens"] = list(preprocess(doc, lexicon).tokens)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    click.echo(f"phishing={len(phish)} legitimate={len(legit)} -> {out}")


@cli.command("gen-corpus")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Root for phishing/ and legitimate/.")
@click.option("--n-per-class", default=594, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--embedding-out", type=click.Path(dir_okay=False), help="Also write the synthetic embedding here.")
@click.option("--dim", default=100, show_default=True, type=click.IntRange(min=1))
def gen_corpus(out, n_per_class, seed, embedding_out, dim):
    """Write a synthetic two-class .eml corpus (and its embedding)."""
    from .harness.synthetic import gen_synthetic_corpus, gen_synthetic_embedding, write_corpus
    from .embedding import table_from_arrays, write_embedding

    words, vectors = gen_synthetic_embedding(dim=dim, seed=seed)
    table = table_from_arrays(words, vectors)
    phish, legit = gen_synthetic_corpus(n_per_class, seed, table)
    write_corpus(phish, legit, out)
    if embedding_out:
        write_embedding(embedding_out, words, vectors)
    click.echo(f"{2 * n_per_class} messages -> {out}")


@cli.command()
@_experiment_options
def run(config_path, **flags):
    """Run every seed of one experiment and print its summary."""
    from .harness.experiment import run_experiment

    summary = run_experiment(_load(config_path, flags))
    click.echo(json.dumps(summary.to_json(), indent=1, sort_keys=True))


@cli.command()
@_experiment_options
@click.option("--k-values", default="10,20,50", show_default=True)
@click.option("--alphas", default="0.0,0.2,0.6,1.0", show_default=True)
def grid(config_path, k_values, alphas, **flags):
    """Sweep client counts x heterogeneity levels."""
    from .harness.experiment import grid as run_grid

    flags.pop("mode", None)
    try:
        Ks = [int(k) for k in k_values.split(",") if k.strip()]
        As = [float(a) for a in alphas.split(",") if a.strip()]
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    summaries = run_grid(_load(config_path, flags), Ks, As)
    for s in summaries:
        flag = " NON-CONVERGED" if s.non_converged else ""
        click.echo(f"K={s.K} alpha={s.alpha:g} last5={s.mean_last5:.4f} final={s.mean_final:.4f}{flag}")


@cli.command("plot-data")
@click.argument("run_dirs", nargs=-1, type=click.Path(file_okay=False, exists=True))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def plot_data(run_dirs, out):
    """Per-round mean/std over seeds for finished runs, as one CSV."""
    from .harness.experiment import summary_from_dir
    from .harness.plotdata import emit_plot_data

    try:
        summaries = [summary_from_dir(d) for d in run_dirs]
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    n = emit_plot_data(summaries, out)
    click.echo(f"{n} rows -> {out}")


@cli.command("grad-check")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--tol", default=1e-4, show_default=True, type=float)
@click.option("--step", default=1e-5, show_default=True, type=float)
def grad_check(seed, tol, step):
    """Compare analytic gradients with central differences on a small model."""
    from .nn.gradcheck import SMALL_SHAPE, check_gradients

    report = check_gradients(SMALL_SHAPE, seed, step=step)
    ok = report.passed(tol)
    click.echo(
        f"params={report.n_params} max_rel_error={report.max_rel_error:.3e} "
        f"worst={report.worst_index} tol={tol:g} {'PASS' if ok else 'FAIL'}"
    )
    if not ok:
        sys.exit(EXIT_CHECK)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="fedpb", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
