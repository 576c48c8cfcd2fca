"""End-to-end comparison: pretrain each method once, then run repeated k-fold
downstream evaluation over one shared partition and compare every method to
the proposed one with the Wilcoxon signed-rank test."""

import json
import logging
from dataclasses import dataclass

from .evaluation import kfold_split, repeated_cv, wilcoxon_signed_rank
from .seeding import seed_derivation
from .trainer import downstream, predict_scores, pretrain

log = logging.getLogger(__name__)

ALPHA = 0.05


@dataclass
class EvaluationReport:
    proposed: str
    reports: dict
    comparisons: dict
    partition: object
    config_fingerprint: str
    pretrain_logs: dict

    def flags(self):
        out = ["folds stratified by task label"]
        for name, cmp in self.comparisons.items():
            if cmp.degenerate:
                out.append(f"{name}: all paired differences zero (degenerate test)")
            elif cmp.p_value >= ALPHA:
                out.append(f"{name}: p={cmp.p_value:.6f} not significant at alpha={ALPHA}")
        return out

    def table(self):
        lines = ["method\tmean_auc\tp_vs_proposed"]
        for name, rep in self.reports.items():
            p = "-" if name == self.proposed else f"{self.comparisons[name].p_value:.6f}"
            lines.append(f"{name}\t{rep.mean_auc:.6f}\t{p}")
        return "\n".join(lines) + "\n"

    def details(self):
        return {
            "config_fingerprint": self.config_fingerprint,
            "proposed": self.proposed,
            "folds": self.partition.k,
            "partition_seed": self.partition.seed,
            "fold_hashes": self.partition.hashes(),
            "methods": {
                name: {
                    "mean_auc": rep.mean_auc,
                    "summaries": rep.summaries,
                    "fold_aucs": rep.fold_aucs,
                    "fold_hashes": rep.fold_hashes,
                }
                for name, rep in self.reports.items()
            },
            "comparisons": {
                name: {
                    "w_plus": c.w_plus,
                    "w_minus": c.w_minus,
                    "p_value": c.p_value,
                    "n_effective": c.n_effective,
                    "exact": c.exact,
                    "degenerate": c.degenerate,
                }
                for name, c in self.comparisons.items()
            },
            "pretrain_final_loss": {k: v[-1][1] for k, v in self.pretrain_logs.items() if v},
            "flags": self.flags(),
        }

    def write(self, table_path, details_path=None):
        with open(table_path, "w") as fh:
            fh.write(self.table())
        if details_path:
            with open(details_path, "w") as fh:
                json.dump(self.details(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def _runner(source, cfg, hidden_dims):
    def run(train, test_features, seed):
        model, head = downstream(source, train, cfg.downstream_config(seed, hidden_dims))
        return predict_scores(model, head, test_features)
    return run


def run_evaluation(cfg, corpus, task):
    """Run the comparison described by ``cfg`` (a :class:`RunConfig`)."""
    partition = kfold_split(task.labels, cfg.folds, seed=seed_derivation(cfg.seed, "fold"))
    base_seed = seed_derivation(cfg.seed, "downstream") % (2**31)
    proposed = cfg.methods[0]
    reports, logs = {}, {}
    for i, method in enumerate(cfg.methods):
        if method == "scratch":
            source, hidden = None, None
        else:
            pcfg = cfg.pretrain_config(method, seed=seed_derivation(cfg.seed, "pretrain", i))
            log.info("pretraining %s for %d epochs", method, pcfg.epochs)
            result = pretrain(corpus, pcfg)
            logs[method] = result.epoch_log
            source, hidden = result, pcfg.hidden_dims
        log.info("evaluating %s (%s)", method, cfg.regime)
        reports[method] = repeated_cv(task, _runner(source, cfg, hidden), partition,
                                      cfg.repeats, base_seed, method, cfg.fingerprint())
    comparisons = {
        name: wilcoxon_signed_rank(reports[proposed].summaries, rep.summaries, proposed, name)
        for name, rep in reports.items() if name != proposed
    }
    return EvaluationReport(proposed, reports, comparisons, partition, cfg.fingerprint(), logs)
