# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

from argparse import ArgumentParser

import numpy as np

from guilt_graph.cli._helpers import (
    add_action,
    bp_opts,
    common_opts,
    input_opts,
    load_config,
    load_labeled_graph,
    valid_path,
)
from guilt_graph.inference import detect_unknown
from guilt_graph.ingest import read_traffic
from guilt_graph.postanalysis import (
    SHORT_LIVED_DAYS,
    DnsEnrichment,
    LeakCatalog,
    asn_stats,
    count_cdf,
    leak_type_ratios,
    scan_leaks,
    select_extremes,
    share_above,
    short_lived_domains,
    unflagged_leaking_app_fraction,
    write_findings,
    write_infra_stats,
    write_leak_reports,
)
from guilt_graph.types import ConfigError
from guilt_graph.util import format_table, write_csv

MANY_ASES = 20
MANY_SHORT_LIVED = 40

# subcommand 'postanalyze'
postanalyze_cmd = ArgumentParser(
    description='Privacy leaks and network infrastructure of the highest and lowest scored unlabeled devices',
    parents=[common_opts, input_opts, bp_opts],
    add_help=False,
)
postanalyze_cmd.add_argument('--enrich-dns', type=valid_path, help='passive DNS CSV domain,first_seen,last_seen')
postanalyze_cmd.add_argument('--enrich-asn', type=valid_path, help='CSV ip,asn')
postanalyze_cmd.add_argument('--catalog', type=valid_path, help='leak keyword catalog (default: packaged)')
postanalyze_cmd.add_argument('--top', type=int, default=100, help='devices taken from each end of the scores')
postanalyze_cmd.add_argument(
    '--threshold', type=float, default=0.5, help='P(bad) above which an unlabeled device is called bad (default 0.5)'
)
postanalyze_cmd.add_argument(
    '--window-days', type=int, default=SHORT_LIVED_DAYS, help='short-lived domain cutoff in days (default 90)'
)


@add_action(postanalyze_cmd)
def postanalyze(config: Path | None, top: int, threshold: float, window_days: int, **flags: object):
    """
    Score the unlabeled devices by BP from every labeled device, take the `top` highest
    and lowest, and write leak and infrastructure statistics per group.
    """
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    traffic = cfg.paths.traffic
    if traffic is None:
        raise ConfigError('postanalyze needs --traffic')
    g, gt = load_labeled_graph(cfg)
    catalog = LeakCatalog.from_csv(cfg.paths.catalog) if cfg.paths.catalog else LeakCatalog.load()
    enrich = DnsEnrichment.load_files(cfg.paths.enrich_dns, cfg.paths.enrich_asn)

    report = detect_unknown(g, gt, cfg.bp, threshold)
    highest, lowest = select_extremes(report.scores, top)
    groups = {'top': highest, 'bottom': lowest, 'bad': sorted(gt.bad_devices), 'good': sorted(gt.good_devices)}

    scan = scan_leaks(read_traffic(traffic), highest + lowest, catalog)
    write_leak_reports(out / 'leaks_top.csv', {d: scan.reports[d] for d in highest}, 'top')
    write_leak_reports(out / 'leaks_bottom.csv', {d: scan.reports[d] for d in lowest}, 'bottom')
    write_findings(out / 'leak_findings.csv', scan.findings)
    type_rows = [
        (name, leak_type, ratio)
        for name in ('top', 'bottom')
        for leak_type, ratio in leak_type_ratios(scan.reports, groups[name], catalog).items()
    ]
    write_csv(out / 'leak_types.csv', ('group', 'type', 'device_ratio'), type_rows)

    everyone = sorted({d for members in groups.values() for d in members})
    asns = asn_stats(read_traffic(traffic), everyone, enrich)
    short = short_lived_domains(read_traffic(traffic), everyone, enrich, window_days)
    write_infra_stats(out / 'infra_stats.csv', groups, asns, short)
    cdf_rows = [
        (name, metric, value, fraction)
        for name, members in groups.items()
        for metric, counts in (('asn_count', asns), ('short_lived_domains', short))
        for value, fraction in count_cdf({d: counts[d] for d in members})
    ]
    write_csv(out / 'infra_cdf.csv', ('group', 'metric', 'value', 'cum_fraction'), cdf_rows)
    cfg.write_effective(out)

    leak_rows = []
    for name in ('top', 'bottom'):
        reports = [scan.reports[d] for d in groups[name]]
        leak_rows.append((
            name,
            len(reports),
            sum(1 for r in reports if r.leaking_packets) / len(reports),
            float(np.mean([r.leaking_app_ratio for r in reports])),
            float(np.mean([r.leaking_traffic_ratio for r in reports])),
        ))
    print(f'Unlabeled devices: {report.n_unknown} ({report.n_bad} predicted bad at P(bad) > {threshold})')
    print(f'Privacy leaks ({len(catalog)} catalog keywords)')
    print(format_table(('group', 'devices', 'leaking', 'app_ratio', 'traffic_ratio'), leak_rows))
    unflagged = unflagged_leaking_app_fraction({d: scan.reports[d] for d in highest}, gt.bad_apps())
    if unflagged is not None:
        print(f'leaking apps of top devices not labeled bad: {unflagged:.1%}')
    print()

    infra_rows = [
        (
            name,
            len(members),
            share_above({d: asns[d] for d in members}, MANY_ASES),
            share_above({d: short[d] for d in members}, MANY_SHORT_LIVED),
        )
        for name, members in groups.items()
    ]
    print(f'Infrastructure (short-lived: under {window_days} days)')
    print(format_table(('group', 'devices', f'>{MANY_ASES} ASes', f'>{MANY_SHORT_LIVED} short-lived'), infra_rows))
    print(flush=True)
