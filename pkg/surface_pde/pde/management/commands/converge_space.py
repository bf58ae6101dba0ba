from pde.experiments import run_converge_space
from pde.serializers import ConvergeSpaceConfigSerializer

from ._base import PdeCommand, write_rows

COLUMNS = ["max_edge_length", "error", "R"]


class Command(PdeCommand):
    help = "Self-convergence study in space over a mesh refinement ladder"
    config_serializer = ConvergeSpaceConfigSerializer

    def run(self, config, out_dir, threads, seed):
        rows = run_converge_space(config, threads, seed)
        write_rows(out_dir / "convergence.csv", rows, COLUMNS)
        self.write_manifest(out_dir, config, seed, threads, table="convergence.csv")
        return "\n".join([",".join(COLUMNS)] + [
            f"{row['max_edge_length']!r},{row['error']!r},{'' if row['R'] is None else repr(row['R'])}"
            for row in rows
        ])
