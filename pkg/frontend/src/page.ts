// Page entry: build the game from the URL's fault flags, install the
// injection hook as a page global, paint to the canvas, and wire arrow keys
// so the fixture is playable by hand. Rendering is on-demand only; nothing
// free-runs, so bridge-driven sessions stay deterministic.

import { ColliderGame, parseFaults } from "./collider";
import { createHook } from "./hook";

const CELL = 32;

function paint(ctx: CanvasRenderingContext2D, game: ColliderGame): void {
  const snap = game.snapshot();
  const state = snap.state as unknown as {
    player: { hp: number; pos: [number, number] };
    phase: string;
    obstacles: Record<string, { pos: [number, number] }>;
  };
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, 10 * CELL, 10 * CELL + 24);
  ctx.strokeStyle = "#2a3139";
  for (let i = 0; i <= 10; i += 1) {
    ctx.beginPath();
    ctx.moveTo(i * CELL, 0);
    ctx.lineTo(i * CELL, 10 * CELL);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(0, i * CELL);
    ctx.lineTo(10 * CELL, i * CELL);
    ctx.stroke();
  }
  ctx.fillStyle = "#c0392b";
  for (const ob of Object.values(state.obstacles)) {
    ctx.fillRect(ob.pos[0] * CELL + 4, ob.pos[1] * CELL + 4, CELL - 8, CELL - 8);
  }
  ctx.fillStyle = state.phase === "game_over" ? "#7f8c8d" : "#27ae60";
  const [px, py] = state.player.pos;
  ctx.beginPath();
  ctx.arc(px * CELL + CELL / 2, py * CELL + CELL / 2, CELL / 2 - 6, 0, Math.PI * 2);
  ctx.fill();
  ctx.fillStyle = "#ecf0f1";
  ctx.font = "14px monospace";
  ctx.fillText(`hp ${state.player.hp}  phase ${state.phase}  tick ${snap.tick}`,
    6, 10 * CELL + 17);
}

function start(): void {
  const w = window as unknown as Record<string, unknown>;
  let faults: string[];
  try {
    faults = parseFaults(new URL(window.location.href).searchParams.get("faults"));
  } catch (error) {
    w.gameHookError = error instanceof Error ? error.message : String(error);
    return;
  }

  const canvas = document.getElementById("game") as HTMLCanvasElement | null;
  // jsdom has no 2D backend; the hook works fine without a paintable canvas
  const ctx = canvas && typeof canvas.getContext === "function"
    ? canvas.getContext("2d")
    : null;
  const render = (game: ColliderGame) => {
    if (ctx) paint(ctx, game);
  };

  const hook = createHook(faults, render);
  hook.reset(0);
  w.gameHook = hook;

  const keys: Record<string, string> = {
    ArrowUp: "up", ArrowDown: "down", ArrowLeft: "left", ArrowRight: "right",
  };
  window.addEventListener("keydown", (event) => {
    const dir = keys[event.key];
    if (dir) {
      hook.act([{ action: "move", params: { dir }, ticks: 1 }]);
    }
  });
}

start();
