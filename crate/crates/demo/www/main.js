import init, { previewInjection, solveSinglePipe, solveEightNode } from "./pkg/blendopt_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// series: [{ name, xs, ys }]
function plot(svg, series, ylabel, offset = 0) {
  const w = svg.clientWidth || 800;
  const h = svg.clientHeight || 220;
  const pad = { l: 60, r: 10, t: 10, b: 30 };
  const xs = series.flatMap((s) => s.xs);
  const ys = series.flatMap((s) => s.ys);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(...ys), y1 = Math.max(...ys);
  if (y1 - y0 < 1e-12) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad.l + ((x - x0) / (x1 - x0 || 1)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);
  let out = `<line x1="${pad.l}" y1="${h - pad.b}" x2="${w - pad.r}" y2="${h - pad.b}" stroke="#999"/>`;
  out += `<line x1="${pad.l}" y1="${pad.t}" x2="${pad.l}" y2="${h - pad.b}" stroke="#999"/>`;
  for (const v of [y0, (y0 + y1) / 2, y1]) {
    out += `<text x="${pad.l - 4}" y="${sy(v) + 4}" font-size="10" text-anchor="end">${v.toPrecision(4)}</text>`;
  }
  for (const v of [x0, (x0 + x1) / 2, x1]) {
    out += `<text x="${sx(v)}" y="${h - pad.b + 14}" font-size="10" text-anchor="middle">${v.toFixed(1)} h</text>`;
  }
  out += `<text x="4" y="${pad.t + 8}" font-size="10">${ylabel}</text>`;
  series.forEach((s, k) => {
    const pts = s.xs.map((x, i) => `${sx(x)},${sy(s.ys[i])}`).join(" ");
    out += `<polyline fill="none" stroke="${COLORS[(k + offset) % COLORS.length]}" stroke-width="1.5" points="${pts}"/>`;
  });
  svg.innerHTML = out;
}

function legend(el, names) {
  el.innerHTML = names.map((n, k) => `<span style="color:${COLORS[k % COLORS.length]}">&#9644; ${n}</span>`).join("");
}

// The solution is periodic, so the first sample is repeated at the horizon.
function closed(times, ys, horizon) {
  return { xs: [...times, horizon], ys: [...ys, ys[0]] };
}

function describe(r) {
  const lines = r.stages.map((s, k) =>
    `${r.stages.length === 2 && k === 0 ? "steady   " : "solve    "} ${s.status}, ${s.iterations} iterations, objective ${s.objective.toExponential(4)}, violation ${s.violation.toExponential(1)}`);
  const o = r.trajectory.objective;
  lines.push(`${r.variables} variables; economic ${o.r_e.toFixed(0)} USD, compression ${o.r_c.toFixed(0)} USD`);
  lines.push(r.audit_passed ? "audit passed" : `audit failed: ${r.failed_checks.join(", ")}`);
  return lines.join("\n");
}

async function busy(statusEl, fn) {
  statusEl.textContent = "solving...";
  await new Promise((ok) => setTimeout(ok, 20));
  const t = performance.now();
  try {
    const text = fn();
    statusEl.textContent = `${text}\n${((performance.now() - t) / 1000).toFixed(2)} s`;
  } catch (e) {
    statusEl.textContent = `error: ${e}`;
  }
}

function preview() {
  try {
    const p = JSON.parse(previewInjection(num("sp-eta0"), num("sp-delta"), num("sp-nu"), num("sp-dt")));
    legend($("sp-legend"), ["injected"]);
    plot($("sp-eta"), [{ name: "injected", xs: p.times_h, ys: p.eta }], "H2 fraction");
    $("sp-status").textContent = "";
  } catch (e) {
    $("sp-status").textContent = `error: ${e}`;
  }
}

function solvePipe() {
  busy($("sp-status"), () => {
    const r = JSON.parse(solveSinglePipe(num("sp-eta0"), num("sp-delta"), num("sp-nu"), num("sp-xi"), num("sp-dt")));
    const tr = r.trajectory;
    const T = tr.times_h.length * tr.dt_h;
    const ids = ["N1", "N2", "N3"];
    legend($("sp-legend"), ids);
    plot($("sp-eta"), ids.map((id) => ({ name: id, ...closed(tr.times_h, tr.nodes.find((n) => n.id === id).eta, T) })), "H2 fraction");
    const w = tr.transfers.find((t) => t.node === "N3");
    plot($("sp-energy"), [{ name: "N3", ...closed(tr.times_h, w.g_e, T) }], "energy N3 (MJ/s)", 2);
    return describe(r);
  });
}

function solveNetwork() {
  busy($("en-status"), () => {
    const r = JSON.parse(solveEightNode(num("en-xi"), num("en-c3"), num("en-j7"), $("en-transient").checked));
    const tr = r.trajectory;
    const T = Math.max(tr.times_h.length * tr.dt_h, tr.dt_h);
    const wd = tr.transfers.filter((t) => t.g_e.some((v) => Math.abs(v) > 1e-9));
    const edges = ["C1", "C2", "C3"].map((id) => tr.edges.find((e) => e.id === id));
    legend($("en-legend"), [...wd.map((t) => `${t.node} energy`), ...edges.map((e) => `${e.id} flow`)]);
    plot($("en-energy"), wd.map((t) => ({ name: t.node, ...closed(tr.times_h, t.g_e, T) })), "energy (MJ/s)");
    plot($("en-flow"), edges.map((e) => ({ name: e.id, ...closed(tr.times_h, e.f0, T) })), "compressor flow (kg/s)", wd.length);
    return describe(r);
  });
}

await init();
$("sp-preview").addEventListener("click", preview);
$("sp-solve").addEventListener("click", solvePipe);
$("en-solve").addEventListener("click", solveNetwork);
preview();
