import init, { Demo, filter_response_db } from "./pkg/tfish_wasm.js";

const SR = 16000;
const $ = (id) => document.getElementById(id);
let demo = null;
let demoSeed = null;

function params() {
  return {
    signal: $("signal").value,
    order: +$("order").value,
    cutoff: +$("cutoff").value,
    snr: $("clean").checked ? NaN : +$("snr").value,
    seed: BigInt($("seed").value),
  };
}

function colormap(t) {
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.5 * t - 0.2)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.5 - Math.abs(2 * t - 1) * 1.5)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 1.2 - 1.5 * t)));
  return [r, g, b];
}

// rows x cols grid, row 0 drawn at the bottom
function drawGrid(canvas, data, rows, cols, lo, hi) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(cols, rows);
  if (lo === undefined) {
    lo = Infinity; hi = -Infinity;
    for (const v of data) { if (v < lo) lo = v; if (v > hi) hi = v; }
  }
  const span = hi - lo || 1;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const [R, G, B] = colormap((data[r * cols + c] - lo) / span);
      const o = ((rows - 1 - r) * cols + c) * 4;
      img.data.set([R, G, B, 255], o);
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = cols; tmp.height = rows;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  return [lo, hi];
}

function drawResponse() {
  const p = params();
  const c = $("response"); const ctx = c.getContext("2d");
  const n = 450;
  const freqs = Float64Array.from({ length: n }, (_, i) => ((i + 0.5) / n) * (SR / 2 - 1));
  const db = filter_response_db(p.order, p.cutoff, SR, freqs);
  ctx.clearRect(0, 0, c.width, c.height);
  const y = (d) => (-Math.max(d, -60) / 60) * (c.height - 10) + 5;
  ctx.strokeStyle = "#bbb";
  for (const d of [0, -3, -20, -40, -60]) {
    ctx.beginPath(); ctx.moveTo(0, y(d)); ctx.lineTo(c.width, y(d)); ctx.stroke();
    ctx.fillText(`${d} dB`, 4, y(d) - 2);
  }
  ctx.strokeStyle = "#c33"; ctx.beginPath();
  const xf = (f) => (f / (SR / 2)) * c.width;
  ctx.moveTo(xf(p.cutoff), 0); ctx.lineTo(xf(p.cutoff), c.height); ctx.stroke();
  ctx.strokeStyle = "#036"; ctx.lineWidth = 2; ctx.beginPath();
  db.forEach((d, i) => (i ? ctx.lineTo(xf(freqs[i]), y(d)) : ctx.moveTo(xf(freqs[i]), y(d))));
  ctx.stroke(); ctx.lineWidth = 1;
}

function drawSpectrogram() {
  const p = params();
  const v = demo.spectrogram(p.signal, p.order, p.cutoff, p.snr, p.seed);
  drawGrid($("spec"), v, demo.n_mels(), demo.n_frames());
}

function drawActivations() {
  const p = params();
  const block = +$("block").value, dim = +$("dim").value;
  const nf = demo.freq_patches(), nt = demo.time_patches();
  const plain = demo.activation_map(p.signal, p.order, p.cutoff, p.snr, p.seed, block, dim, false);
  const filt = demo.activation_map(p.signal, p.order, p.cutoff, p.snr, p.seed, block, dim, true);
  let lo = Infinity, hi = -Infinity;
  for (const x of [...plain, ...filt]) { if (x < lo) lo = x; if (x > hi) hi = x; }
  drawGrid($("plain"), plain, nf, nt, lo, hi);
  drawGrid($("filtered"), filt, nf, nt, lo, hi);
  $("bin").textContent = `cutoff bin f'c = ${demo.cutoff_bin(p.cutoff)} of ${nf}`;
}

function drawProbe() {
  const p = params();
  const v = demo.probe(p.signal, p.seed);
  const body = $("probe").tBodies[0];
  body.innerHTML = "";
  for (let i = 0; i < v.length / 3; i++) {
    const tr = body.insertRow();
    tr.insertCell().textContent = i === 0 ? "embedding" : `block ${i - 1}`;
    for (let k = 0; k < 3; k++) {
      const x = v[3 * i + k];
      tr.insertCell().textContent = Number.isNaN(x) ? "degenerate" : x.toFixed(4);
    }
  }
}

function ensureDemo() {
  const s = BigInt($("mseed").value);
  if (demo === null || s !== demoSeed) {
    if (demo) demo.free();
    demo = new Demo(s);
    demoSeed = s;
  }
}

function refresh(what) {
  try {
    ensureDemo();
    const t0 = performance.now();
    if (what.has("response")) drawResponse();
    if (what.has("spec")) drawSpectrogram();
    if (what.has("act")) drawActivations();
    if (what.has("probe")) drawProbe();
    $("status").textContent = `updated in ${(performance.now() - t0).toFixed(0)} ms`;
  } catch (e) {
    $("status").textContent = `error: ${e.message ?? e}`;
  }
}

const all = new Set(["response", "spec", "act", "probe"]);
for (const id of ["order", "cutoff"]) $(id).addEventListener("change", () => refresh(all));
for (const id of ["signal", "seed"]) $(id).addEventListener("change", () => refresh(new Set(["spec", "act", "probe"])));
for (const id of ["snr", "clean"]) $(id).addEventListener("change", () => refresh(new Set(["spec", "act"])));
for (const id of ["block", "dim"]) $(id).addEventListener("change", () => refresh(new Set(["act"])));
$("mseed").addEventListener("change", () => refresh(new Set(["act", "probe"])));

await init();
refresh(all);
