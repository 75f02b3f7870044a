import init, { rolloutPath, basisCurves, fitStroke, kernelNames } from "./pkg/ndp_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Square world box [-1, 1]^2 mapped onto a canvas.
function worldView(canvas, extent = 1) {
  const s = canvas.width / (2 * extent);
  return {
    px: (x) => (x + extent) * s,
    py: (y) => canvas.height - (y + extent) * s,
    wx: (px) => px / s - extent,
    wy: (py) => (canvas.height - py) / s - extent,
  };
}

function polyline(ctx, flat, view, color, width = 2) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  for (let i = 0; i < flat.length; i += 2) {
    const x = view.px(flat[i]), y = view.py(flat[i + 1]);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function dot(ctx, x, y, color, r = 5) {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function showError(e) {
  $("error").textContent = e ? String(e.message ?? e) : "";
}

function syncOutputs() {
  for (const out of document.querySelectorAll("output[for]")) {
    out.textContent = $(out.htmlFor).value;
  }
}

const rollout = {
  goal: [0.5, 0.4],
  start: [-0.6, -0.5],
  unit: [],
  shuffle() {
    // weights in [-1, 1], scaled by the slider
    this.unit = Array.from({ length: 2 * 60 }, () => 2 * Math.random() - 1);
  },
  draw() {
    const canvas = $("rollout");
    const ctx = clear(canvas);
    const view = worldView(canvas);
    const n = num("r-n");
    const scale = num("r-scale");
    const w = [...this.unit.slice(0, n), ...this.unit.slice(60, 60 + n)].map((v) => v * scale);
    const path = rolloutPath(new Float64Array(w), ...this.goal, ...this.start, n, num("r-m"), num("r-alpha"), $("r-kernel").value);
    const plain = rolloutPath(new Float64Array(2 * n), ...this.goal, ...this.start, n, num("r-m"), num("r-alpha"), $("r-kernel").value);
    polyline(ctx, plain, view, "#bbb", 1);
    polyline(ctx, path, view, COLORS[0]);
    dot(ctx, view.px(this.start[0]), view.py(this.start[1]), "#444");
    dot(ctx, view.px(this.goal[0]), view.py(this.goal[1]), COLORS[2], 6);
  },
};

function drawBasis() {
  const canvas = $("basis");
  const ctx = clear(canvas);
  const n = num("b-n");
  const samples = 200;
  const out = basisCurves(n, $("b-kernel").value, num("b-eps"), samples);
  const rows = [];
  for (let i = 0; i < n; i++) rows.push(out.subarray(samples * (i + 1), samples * (i + 2)));
  let lo = Math.min(0, ...rows.map((r) => Math.min(...r)));
  let hi = Math.max(...rows.map((r) => Math.max(...r)));
  if (hi - lo < 1e-9) hi = lo + 1;
  const pad = 12;
  const px = (x) => pad + x * (canvas.width - 2 * pad);
  const py = (v) => canvas.height - pad - ((v - lo) / (hi - lo)) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  rows.forEach((row, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    row.forEach((v, j) => (j === 0 ? ctx.moveTo(px(out[j]), py(v)) : ctx.lineTo(px(out[j]), py(v))));
    ctx.stroke();
  });
  ctx.fillStyle = "#444";
  ctx.fillText("phase x", canvas.width / 2 - 18, canvas.height - 1);
}

function drawStroke() {
  const canvas = $("stroke");
  const ctx = clear(canvas);
  const view = worldView(canvas, 0.7);
  const fit = fitStroke(num("s-digit"), num("s-n"), 200, 25, $("s-kernel").value);
  const target = fit.target();
  polyline(ctx, target, view, "#999", 4);
  polyline(ctx, fit.fitted(), view, COLORS[1]);
  dot(ctx, view.px(target[0]), view.py(target[1]), "#444");
  $("s-mse").textContent = fit.mse().toExponential(2);
  fit.free();
}

function guarded(fn) {
  return () => {
    syncOutputs();
    try {
      fn();
      showError(null);
    } catch (e) {
      showError(e);
    }
  };
}

async function main() {
  await init();
  for (const select of document.querySelectorAll("select.kernels")) {
    for (const name of kernelNames()) select.add(new Option(name.replaceAll("_", " "), name));
  }
  for (let d = 0; d < 10; d++) $("s-digit").add(new Option(String(d), String(d)));

  const redrawRollout = guarded(() => rollout.draw());
  const redrawBasis = guarded(drawBasis);
  const redrawStroke = guarded(drawStroke);
  for (const id of ["r-n", "r-alpha", "r-m", "r-scale", "r-kernel"]) $(id).addEventListener("input", redrawRollout);
  for (const id of ["b-n", "b-eps", "b-kernel"]) $(id).addEventListener("input", redrawBasis);
  for (const id of ["s-digit", "s-n", "s-kernel"]) $(id).addEventListener("input", redrawStroke);
  $("r-shuffle").addEventListener("click", () => {
    rollout.shuffle();
    redrawRollout();
  });
  $("rollout").addEventListener("click", (ev) => {
    const view = worldView($("rollout"));
    const rect = ev.target.getBoundingClientRect();
    rollout.goal = [view.wx(ev.clientX - rect.left), view.wy(ev.clientY - rect.top)];
    redrawRollout();
  });

  rollout.shuffle();
  redrawRollout();
  redrawBasis();
  redrawStroke();
}

main().catch(showError);
