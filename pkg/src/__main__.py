import json
import logging
import sys

from rich.logging import RichHandler

from src.errors import PipelineError


def _error_line(exc: BaseException, code: int) -> str:
    return f"error={type(exc).__name__} code={code} message={json.dumps(str(exc), ensure_ascii=False)}"


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(show_path=False, markup=False, rich_tracebacks=verbose)],
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    from src.cli import parse_args
    from src.pipeline import run_pipeline

    argv = sys.argv[1:] if argv is None else argv
    try:
        invocation = parse_args(argv)
        _setup_logging(invocation.config.verbose)
        return run_pipeline(
            invocation.subcommand,
            invocation.config,
            models=invocation.models,
            days=invocation.days,
            baseline=invocation.baseline,
        )
    except PipelineError as e:
        print(_error_line(e, e.exit_code), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nStopped.", file=sys.stderr)
        return 130
    except Exception as e:
        logging.getLogger(__name__).debug("unexpected failure", exc_info=True)
        print(_error_line(e, 1), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
