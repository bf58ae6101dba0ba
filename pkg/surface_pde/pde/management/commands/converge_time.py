from pde.experiments import run_converge_time
from pde.serializers import ConvergeTimeConfigSerializer

from ._base import PdeCommand, write_rows

COLUMNS = ["h", "error", "R"]


class Command(PdeCommand):
    help = "Self-convergence study in time: errors and observed orders as h halves"
    config_serializer = ConvergeTimeConfigSerializer

    def run(self, config, out_dir, threads, seed):
        rows = run_converge_time(config, threads, seed)
        write_rows(out_dir / "convergence.csv", rows, COLUMNS)
        self.write_manifest(out_dir, config, seed, threads, table="convergence.csv")
        return "\n".join([",".join(COLUMNS)] + [
            f"{row['h']!r},{row['error']!r},{'' if row['R'] is None else repr(row['R'])}" for row in rows
        ])
