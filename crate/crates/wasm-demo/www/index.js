import init, { points, psi_profile, record_curve } from "./pkg/welldist_wasm.js";

const $ = (id) => document.getElementById(id);

function show(id, text, error = false) {
  const el = $(id);
  el.textContent = text;
  el.className = error ? "out err" : "out";
}

function run(outId, f) {
  try {
    f();
  } catch (e) {
    show(outId, String(e.message ?? e), true);
  }
}

// log-log plot of (x, y) pairs; `marks` are drawn as dots on top
function plot(canvas, series, marks = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pts = series.concat(marks).filter(([x, y]) => x > 0 && y > 0);
  if (pts.length === 0) return;
  const lx = pts.map(([x]) => Math.log10(x));
  const ly = pts.map(([, y]) => Math.log10(y));
  const [x0, x1] = [Math.min(...lx), Math.max(...lx) || 1];
  const [y0, y1] = [Math.min(...ly), Math.max(...ly)];
  const pad = 30;
  const sx = (x) => pad + ((Math.log10(x) - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((Math.log10(y) - y0) / (y1 - y0 || 1)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(`1e${y1.toFixed(1)}`, 2, pad);
  ctx.fillText(`1e${y0.toFixed(1)}`, 2, h - pad);
  ctx.fillText(`1e${x1.toFixed(1)}`, w - pad - 20, h - 8);

  ctx.strokeStyle = "#1f5fa8";
  ctx.beginPath();
  series.forEach(([x, y], i) => {
    if (!(x > 0 && y > 0)) return;
    i === 0 ? ctx.moveTo(sx(x), sy(y)) : ctx.lineTo(sx(x), sy(y));
  });
  ctx.stroke();
  ctx.fillStyle = "#c0392b";
  for (const [x, y] of marks) {
    if (x > 0 && y > 0) ctx.fillRect(sx(x) - 2, sy(y) - 2, 4, 4);
  }
}

function drawPoints() {
  $("p-qv").textContent = $("p-q").value;
  run("p-out", () => {
    const v = JSON.parse(points($("p-alpha").value, Number($("p-q").value)));
    const canvas = $("p-canvas");
    const ctx = canvas.getContext("2d");
    const s = canvas.width;
    ctx.clearRect(0, 0, s, s);
    const d = v.dispersion;
    const anchor = d.witness_anchor;

    // the empty box, wrapped around the torus
    ctx.fillStyle = "rgba(31, 95, 168, 0.25)";
    const ay = v.dim === 2 ? anchor[1] : 0;
    const side = v.side;
    const hy = v.dim === 2 ? side : 1;
    for (const dx of [0, -1]) {
      for (const dy of [0, -1]) {
        ctx.fillRect((anchor[0] + dx) * s, s - (ay + dy + hy) * s, side * s, hy * s);
      }
    }

    ctx.fillStyle = "#222";
    for (const p of v.points) {
      const y = v.dim === 2 ? p[1] : 0.5;
      ctx.beginPath();
      ctx.arc(p[0] * s, s - y * s, 2, 0, 2 * Math.PI);
      ctx.fill();
    }
    show(
      "p-out",
      `s* = ${d.s_star.toPrecision(6)}   q s*^n = ${d.C_of_q.toPrecision(6)}\n` +
        `covering radius in [${d.rho_lower.toPrecision(6)}, ${d.rho_upper.toPrecision(6)}]`,
    );
  });
}

function drawPsi() {
  run("s-out", () => {
    const v = JSON.parse(psi_profile($("s-alpha").value, Number($("s-t").value)));
    plot($("s-canvas"), v.records, v.local_maxima);
    const last = v.local_maxima.at(-1);
    show(
      "s-out",
      `${v.records.length} records, ${v.classification}` +
        (last ? `; last local maximum ${last[1].toPrecision(6)} at t = ${last[0]}` : ""),
    );
  });
}

function drawCurve() {
  run("r-out", () => {
    const eta = new Float64Array($("r-eta").value.split(",").map(Number));
    const v = JSON.parse(record_curve($("r-alpha").value, eta, Number($("r-k").value)));
    plot($("r-canvas"), v.curve);
    const [k, r] = v.curve.at(-1);
    show("r-out", `r(${k}) = ${r.toPrecision(6)}, attained at k = ${v.best_k}`);
  });
}

await init();
$("p-q").addEventListener("input", drawPoints);
$("p-alpha").addEventListener("change", drawPoints);
$("s-go").addEventListener("click", drawPsi);
$("r-go").addEventListener("click", drawCurve);
drawPoints();
drawPsi();
drawCurve();
