import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

import pandas as pd


class ResultExporter:
    """
    Writes result tables as CSV or JSON records, to a file or stdout, plus
    the effective configuration as a JSON sidecar next to the file.
    """
    def __init__(self, out: Optional[Path] = None, fmt: str = "csv"):
        if fmt not in ("csv", "json"):
            raise ValueError(f"Unknown output format {fmt!r}")
        self.out = Path(out) if out is not None else None
        self.fmt = fmt
        self._ensure_output_dir()

    def _ensure_output_dir(self) -> None:
        if self.out is not None:
            self.out.parent.mkdir(parents=True, exist_ok=True)

    def render(self, df: pd.DataFrame) -> str:
        if self.fmt == "json":
            return df.to_json(orient='records', indent=2, double_precision=15) + "\n"
        return df.to_csv(index=False, float_format='%.12g', lineterminator='\n')

    def export_results(self, df: pd.DataFrame) -> Optional[Path]:
        text = self.render(df)
        if self.out is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return None
        self.out.write_text(text)
        logging.info(f"Wrote {len(df)} records to {self.out}")
        return self.out

    def config_path(self) -> Optional[Path]:
        if self.out is None:
            return None
        return self.out.with_name(f"{self.out.stem}.config.json")

    def export_config(self, config: Dict) -> Optional[Path]:
        """Export the effective configuration; skipped when results go to stdout"""
        filename = self.config_path()
        if filename is None:
            return None
        with open(filename, 'w') as f:
            json.dump(config, f, indent=4, sort_keys=True)
        return filename

    def export_all(self, df: pd.DataFrame, config: Dict) -> Dict[str, Optional[Path]]:
        return {
            'results': self.export_results(df),
            'config': self.export_config(config),
        }
