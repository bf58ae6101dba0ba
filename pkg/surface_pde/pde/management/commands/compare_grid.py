from pde.experiments import solver_config
from pde.frontprop import REPORT_COLUMNS, compare_schemes, reference_spread, write_report
from pde.serializers import CompareGridConfigSerializer

from ._base import PdeCommand


class Command(PdeCommand):
    help = "Compare the conic G-equation step with Osher-Sethian and Lax-Friedrichs grid schemes"
    config_serializer = CompareGridConfigSerializer

    def run(self, config, out_dir, threads, seed):
        report = compare_schemes(config["n"], config["h"], config["steps"], config["eps_reg"],
                                 config["radius"], config["height"], solver_config(config.get("solver")), threads)
        write_report(report, out_dir / "report.csv")
        spread = reference_spread(config["n"], config["h"], config["steps"], config["radius"], config["height"])
        self.write_manifest(out_dir, config, seed, threads, report="report.csv", reference_spread=spread)
        return "\n".join([",".join(REPORT_COLUMNS)] + [
            ",".join(repr(row[c]) for c in REPORT_COLUMNS) for row in report
        ])
