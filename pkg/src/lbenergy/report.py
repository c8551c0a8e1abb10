"""Tables, CSV and SVG charts built from RunRecords.

Every number shown comes from a record field; the only arithmetic here is
per-domain energy per site (power x time per site), ratios and argmin.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from html import escape

from .layouts import LayoutKind

CSV_COLUMNS = (
    "layout", "threads", "memory_target", "kernel",
    "ns_per_site", "p_avg_w_pkg", "p_avg_w_dram", "e_s_per_site", "bandwidth_gbs",
)
KERNEL_ORDER = ("propagate", "collide")
_LAYOUT_ORDER = {"AoS": 0, "SoA": 1, "CSoA": 2, "CAoSoA": 3}


class ReportError(ValueError):
    pass


def layout_key(text: str):
    try:
        k = LayoutKind.parse(text)
        return (_LAYOUT_ORDER[k.tag], k.vl, "")
    except ValueError:
        return (99, 0, str(text))


def kernel_key(name: str):
    return (KERNEL_ORDER.index(name), "") if name in KERNEL_ORDER else (len(KERNEL_ORDER), name)


def parse_records(text: str, source: str = "<input>") -> list[dict]:
    """Parse JSON Lines; blank lines are skipped, malformed lines raise with their number."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReportError(f"{source}:{lineno}: malformed record: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise ReportError(f"{source}:{lineno}: record is not an object")
        if rec.get("status", "ok") == "ok":
            if "kernels" not in rec or "config" not in rec:
                raise ReportError(f"{source}:{lineno}: record lacks 'config' or 'kernels'")
        out.append(rec)
    return out


def load_records(path) -> list[dict]:
    with open(path) as fh:
        return parse_records(fh.read(), str(path))


def ok_records(records):
    return [r for r in records if r.get("status", "ok") == "ok"]


def domain_energy_per_site(metrics: dict, domain: str) -> float | None:
    p = metrics.get("p_avg_w", {}).get(domain)
    if p is None:
        return None
    return p * metrics["ns_per_site"] * 1e-9


def dram_available(record: dict) -> bool:
    return "dram:unavailable" not in record.get("flags", [])


@dataclass
class ReportRow:
    layout: str
    threads: int
    memory_target: str
    kernel: str
    ns_per_site: float
    p_avg_w_pkg: float | None
    p_avg_w_dram: float | None
    e_s_per_site: float
    bandwidth_gbs: float | None = None

    def values(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def report_table(records) -> list[ReportRow]:
    """One row per (record, kernel), ordered by layout, threads, kernel."""
    rows = []
    for rec in ok_records(records):
        cfg = rec["config"]
        for kernel, m in rec["kernels"].items():
            p = m.get("p_avg_w", {})
            rows.append(ReportRow(
                layout=str(cfg.get("layout", "?")),
                threads=int(cfg.get("threads", 0)),
                memory_target=str(cfg.get("memory_target", "default")),
                kernel=kernel,
                ns_per_site=float(m["ns_per_site"]),
                p_avg_w_pkg=p.get("package"),
                p_avg_w_dram=p.get("dram") if dram_available(rec) else None,
                e_s_per_site=float(m["e_s_per_site_j"]),
                bandwidth_gbs=m.get("bandwidth_gbs"),
            ))
    rows.sort(key=lambda r: (layout_key(r.layout), r.threads, kernel_key(r.kernel)))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".16e")
    return str(v)


def render_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for row in report_table(records):
        w.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    """Read back render_csv output; numeric columns become floats (empty -> None)."""
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    numeric = set(CSV_COLUMNS[4:])
    for r in reader:
        d = dict(r)
        d["threads"] = int(d["threads"])
        for c in numeric:
            d[c] = float(d[c]) if d[c] else None
        rows.append(d)
    return rows


def render_text_table(records) -> str:
    rows = report_table(records)
    head = f"{'layout':<11} {'thr':>4} {'memory':<9} {'kernel':<10} {'ns/site':>10} {'P_pkg W':>9} {'P_dram W':>9} {'E_s J/site':>12} {'GB/s':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.layout:<11} {r.threads:>4} {r.memory_target:<9} {r.kernel:<10} {r.ns_per_site:>10.3f} "
            f"{_opt(r.p_avg_w_pkg, '9.2f')} {_opt(r.p_avg_w_dram, '9.2f')} {r.e_s_per_site:>12.4e} "
            f"{_opt(r.bandwidth_gbs, '8.2f')}"
        )
    return "\n".join(lines)


def _opt(v, spec):
    width = int(spec.split(".")[0])
    return format(v, spec) if v is not None else " " * (width - 1) + "-"


# -- SVG ------------------------------------------------------------------

_SI = [(1.0, ""), (1e-3, "m"), (1e-6, "µ"), (1e-9, "n"), (1e-12, "p"), (1e-15, "f")]


def si_scale(vmax: float) -> tuple[float, str]:
    for factor, prefix in _SI:
        if vmax >= factor:
            return factor, prefix
    return _SI[-1]


def _nice_ceiling(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * 10**exp >= v * (1 - 1e-12):
            return m * 10**exp
    return 10 ** (exp + 1)


def render_energy_chart(records, kernel: str, title: str | None = None) -> str:
    """Grouped stacked bars: one group per layout, one bar per thread count;
    package energy per site at the bottom, DRAM on top."""
    bars = []
    for rec in ok_records(records):
        m = rec["kernels"].get(kernel)
        if m is None:
            continue
        cfg = rec["config"]
        pkg = domain_energy_per_site(m, "package") or 0.0
        has_dram = dram_available(rec) and domain_energy_per_site(m, "dram") is not None
        dram = domain_energy_per_site(m, "dram") if has_dram else None
        bars.append({
            "layout": str(cfg.get("layout")), "threads": int(cfg.get("threads", 0)),
            "memory": str(cfg.get("memory_target", "default")),
            "pkg": max(pkg, 0.0), "dram": max(dram, 0.0) if dram is not None else None,
        })
    if not bars:
        raise ReportError(f"no records for kernel {kernel!r}")
    bars.sort(key=lambda b: (layout_key(b["layout"]), b["threads"], b["memory"]))
    groups: dict[str, list[dict]] = {}
    for b in bars:
        groups.setdefault(b["layout"], []).append(b)

    vmax = max(b["pkg"] + (b["dram"] or 0.0) for b in bars)
    factor, prefix = si_scale(vmax if vmax > 0 else 1.0)
    ymax = _nice_ceiling(vmax / factor) * factor if vmax > 0 else factor

    bar_w, bar_gap, group_gap = 28, 6, 30
    left, right, top, bottom = 80, 170, 40, 60
    plot_h = 300
    width_plot = sum(len(g) * (bar_w + bar_gap) - bar_gap for g in groups.values()) + group_gap * (len(groups) + 1)
    W, H = left + width_plot + right, top + plot_h + bottom

    def y_of(v):
        return top + plot_h - v / ymax * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
        f'{escape(title or f"{kernel}: energy to solution per lattice site")}</text>',
    ]
    for i in range(6):
        v = ymax * i / 5
        y = y_of(v)
        out.append(f'<line x1="{left}" y1="{y:.3f}" x2="{left + width_plot}" y2="{y:.3f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.3f}" text-anchor="end">{v / factor:.4g}</text>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{left + width_plot}" y2="{top + plot_h}" stroke="black"/>')
    out.append(f'<text transform="translate(20,{top + plot_h / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'E_s [{prefix}J/site]</text>')

    x = left + group_gap
    any_missing = False
    for layout, gbars in groups.items():
        gx0 = x
        for b in gbars:
            base = top + plot_h
            y_pkg = y_of(b["pkg"])
            label = f"{layout} {b['threads']}t {b['memory']}"
            out.append(
                f'<rect class="bar" data-segment="package" data-layout="{escape(layout)}" '
                f'data-threads="{b["threads"]}" data-value="{b["pkg"]:.6e}" x="{x}" y="{y_pkg:.3f}" '
                f'width="{bar_w}" height="{base - y_pkg:.3f}" fill="#4c72b0">'
                f'<title>{escape(label)} package {b["pkg"]:.4e} J/site</title></rect>'
            )
            if b["dram"] is None:
                any_missing = True
            else:
                y_tot = y_of(b["pkg"] + b["dram"])
                out.append(
                    f'<rect class="bar" data-segment="dram" data-layout="{escape(layout)}" '
                    f'data-threads="{b["threads"]}" data-value="{b["dram"]:.6e}" x="{x}" y="{y_tot:.3f}" '
                    f'width="{bar_w}" height="{y_pkg - y_tot:.3f}" fill="#dd8452">'
                    f'<title>{escape(label)} dram {b["dram"]:.4e} J/site</title></rect>'
                )
            out.append(f'<text x="{x + bar_w / 2:.1f}" y="{top + plot_h + 14}" text-anchor="middle">{b["threads"]}</text>')
            x += bar_w + bar_gap
        x -= bar_gap
        out.append(f'<text x="{(gx0 + x) / 2:.1f}" y="{top + plot_h + 32}" text-anchor="middle" '
                   f'font-weight="bold">{escape(layout)}</text>')
        x += group_gap

    lx = left + width_plot + 15
    out.append(f'<rect x="{lx}" y="{top}" width="12" height="12" fill="#4c72b0"/>')
    out.append(f'<text x="{lx + 18}" y="{top + 10}">Package</text>')
    out.append(f'<rect x="{lx}" y="{top + 20}" width="12" height="12" fill="#dd8452"/>')
    out.append(f'<text x="{lx + 18}" y="{top + 30}">DRAM</text>')
    out.append(f'<text x="{lx}" y="{top + 50}">bars: threads</text>')
    if any_missing:
        out.append(f'<text x="{lx}" y="{top + 68}" fill="#a00">DRAM unavailable:</text>')
        out.append(f'<text x="{lx}" y="{top + 82}" fill="#a00">package-only bars</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- comparison -----------------------------------------------------------

@dataclass
class ComparisonRow:
    kernel: str
    set_name: str
    best_e_s_per_site: float
    best_config: str
    ratio: float


def _config_label(rec: dict) -> str:
    cfg = rec.get("config", {})
    return f"{cfg.get('layout', '?')}/{cfg.get('threads', '?')}t/{cfg.get('memory_target', 'default')}"


def render_comparison(record_sets: dict[str, list[dict]]) -> list[ComparisonRow]:
    """Per kernel and set: the lowest e_s per site, the config that achieved it,
    and its ratio to the first set's best."""
    if not record_sets:
        raise ReportError("no record sets given")
    kernel_sets = []
    for name, recs in record_sets.items():
        ks = {k for r in ok_records(recs) for k in r["kernels"]}
        kernel_sets.append(ks)
    shared = set.intersection(*kernel_sets)
    if not shared:
        raise ReportError("record sets share no kernels")
    rows = []
    for kernel in sorted(shared, key=kernel_key):
        ref = None
        for name, recs in record_sets.items():
            best = min(
                (r for r in ok_records(recs) if kernel in r["kernels"]),
                key=lambda r: r["kernels"][kernel]["e_s_per_site_j"],
            )
            e = best["kernels"][kernel]["e_s_per_site_j"]
            if ref is None:
                ref = e
            rows.append(ComparisonRow(kernel, name, e, _config_label(best), e / ref if ref else math.nan))
    return rows


def comparison_text(rows: list[ComparisonRow]) -> str:
    head = f"{'kernel':<10} {'set':<16} {'best E_s J/site':>16} {'ratio':>7}  config"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.kernel:<10} {r.set_name:<16} {r.best_e_s_per_site:>16.6e} {r.ratio:>7.3f}  {r.best_config}")
    return "\n".join(lines)
