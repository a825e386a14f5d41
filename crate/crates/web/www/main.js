import init, { Simulation, kernel_profile, trace_curve } from "./pkg/nlch_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, ys, { lo, hi, xs, dots } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 24;
  ctx.clearRect(0, 0, w, h);
  const finite = ys.filter(Number.isFinite);
  lo = lo ?? Math.min(...finite);
  hi = hi ?? Math.max(...finite);
  if (hi - lo < 1e-12) { hi += 0.5; lo -= 0.5; }
  const x = (i) => pad + (w - 2 * pad) * (xs ? xs[i] : i / Math.max(ys.length - 1, 1));
  const y = (v) => h - pad - (h - 2 * pad) * (v - lo) / (hi - lo);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(3), 2, pad - 4);
  ctx.fillText(lo.toPrecision(3), 2, h - 6);
  if (lo < 0 && hi > 0) {
    ctx.beginPath(); ctx.moveTo(pad, y(0)); ctx.lineTo(w - pad, y(0)); ctx.stroke();
  }
  ctx.strokeStyle = "#1a5fb4";
  ctx.fillStyle = "#1a5fb4";
  ctx.beginPath();
  let pen = false;
  ys.forEach((v, i) => {
    if (!Number.isFinite(v)) { pen = false; return; }
    pen ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v));
    pen = true;
    if (dots) ctx.fillRect(x(i) - 2, y(v) - 2, 4, 4);
  });
  ctx.stroke();
}

let sim = null;
let running = false;

function show() {
  plot($("field"), sim.field(), { lo: 0, hi: 1, xs: sim.coords() });
  $("status").textContent =
    `t=${sim.time().toFixed(3)} mass=${sim.mass().toFixed(6)} energy=${sim.energy().toFixed(6)}`;
}

function reset() {
  try {
    sim?.free();
    sim = new Simulation(num("n"), num("kc"), num("lambda"), $("preset").value,
                         num("rate"), num("dt"), num("seed"));
    show();
  } catch (e) {
    sim = null;
    running = false;
    $("status").textContent = String(e);
  }
}

function frame() {
  if (!running || !sim) return;
  try {
    sim.advance(20);
    show();
    requestAnimationFrame(frame);
  } catch (e) {
    running = false;
    $("status").textContent = String(e);
  }
}

function profile() {
  try {
    plot($("kernel"), kernel_profile($("family").value, num("pc"), num("pw"), 200, 1.0));
  } catch (e) {
    $("kernel").getContext("2d").clearRect(0, 0, 720, 200);
  }
}

function trace() {
  $("tstatus").textContent = "computing";
  setTimeout(() => {
    try {
      const c = trace_curve(num("sigma"), num("tc"), num("nmax"), num("tend"));
      plot($("curve"), c, { dots: true });
      $("tstatus").textContent = `trace(1)=${c[0].toFixed(4)}`;
    } catch (e) {
      $("tstatus").textContent = String(e);
    }
  }, 0);
}

await init();
$("reset").onclick = reset;
$("play").onclick = () => {
  running = !running;
  $("play").textContent = running ? "pause" : "play";
  if (running) frame();
};
$("profile").onclick = profile;
$("trace").onclick = trace;
reset();
profile();
