# vssprofile/_utils.py

import math
import threading
import time
from typing import Any, Iterable, Optional, Sequence

import click


def sig6(value: Any) -> str:
    """Format a number to 6 significant digits for human tables."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            return str(value)
        return f"{value:.6g}"
    return str(value)


def full_precision(value: float) -> str:
    """Shortest text that round-trips a double, with at most 17 digits."""
    return f"{value:.17g}"


def print_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Print a plain column-aligned table with dynamic widths using click."""
    if not headers:
        return
    cells = [[sig6(value) for value in row] for row in rows]

    widths = []
    for i, header in enumerate(headers):
        width = len(str(header))
        for row in cells:
            if i < len(row):
                width = max(width, len(row[i]))
        widths.append(width)

    click.echo("  ".join(f"{str(h):<{widths[i]}}" for i, h in enumerate(headers)).rstrip())
    click.echo("  ".join("-" * w for w in widths).rstrip())
    for row in cells:
        padded = [row[i] if i < len(row) else "" for i in range(len(headers))]
        click.echo(
            "  ".join(f"{v:<{widths[i]}}" for i, v in enumerate(padded)).rstrip()
        )


# ─────────────────────────────────────────────────────────────
#  Spinner Definition
# ─────────────────────────────────────────────────────────────


class Spinner:
    """A context manager that shows an animated spinner with a status message.

    Output goes to stderr so that JSON written to stdout stays parseable.
    """

    SPINNER_FRAMES = ["⠋", "⠙", "⠹", "⠸", "⠼", "⠴", "⠦", "⠧", "⠇", "⠏"]

    def __init__(
        self,
        text: str,
        success_text: Optional[str] = None,
        color: str = "green",
        enabled: bool = True,
    ):
        self.text = text
        self.success_text = success_text
        self.color = color
        self.enabled = enabled
        self.stop_event = threading.Event()
        self.thread: Optional[threading.Thread] = None

    def _spinner_task(self):
        frame_index = 0
        while not self.stop_event.is_set():
            frame = self.SPINNER_FRAMES[frame_index % len(self.SPINNER_FRAMES)]
            click.echo(f"\r{frame} {self.text}", nl=False, err=True)
            time.sleep(0.1)
            frame_index += 1

        clear_line = "\r" + " " * (len(self.text) + 4) + "\r"
        click.echo(clear_line, nl=False, err=True)

    def __enter__(self):
        if self.enabled:
            self.thread = threading.Thread(target=self._spinner_task, daemon=True)
            self.thread.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop_event.set()
        if self.thread is not None:
            self.thread.join()
        if not self.enabled:
            return False
        if exc_type is None and self.success_text:
            click.secho(f"✔ {self.success_text}", fg=self.color, err=True)
        elif exc_type is not None:
            click.secho(f"✘ {self.text} failed", fg="red", err=True)
        return False


try:
    from enum import StrEnum
except ImportError:
    from enum import Enum

    class StrEnum(str, Enum):
        """String enumeration with nicer repr and comparison behavior."""

        def __repr__(self):
            return self.value

        def __str__(self):
            return self.value
