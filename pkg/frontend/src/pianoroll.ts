/** Piano-roll layout: 16 step columns by pitch rows. */
import { Note } from "./api.js";

export interface RollCell {
  row: number; // 0 = highest pitch row
  col: number; // 0..15
  span: number; // duration in steps
  pitch: number;
  onset: boolean;
}

export interface RollLayout {
  pitchTop: number;
  pitchBottom: number;
  rows: number;
  cells: RollCell[];
}

export const STEPS = 16;
const MIN_ROWS = 13;

/** Map notes onto grid cells with an auto-fitted pitch range. */
export function layoutRoll(notes: Note[]): RollLayout {
  if (notes.length === 0) {
    const top = 71; // around middle C
    return { pitchTop: top, pitchBottom: top - (MIN_ROWS - 1), rows: MIN_ROWS, cells: [] };
  }
  let low = Math.min(...notes.map((n) => n[0]));
  let high = Math.max(...notes.map((n) => n[0]));
  while (high - low + 1 < MIN_ROWS) {
    if (high < 127) high += 1;
    if (high - low + 1 < MIN_ROWS && low > 0) low -= 1;
  }
  const cells = notes.map(([pitch, onset, duration]) => ({
    row: high - pitch,
    col: onset,
    span: Math.max(1, Math.min(duration, STEPS - onset)),
    pitch,
    onset: true,
  }));
  return { pitchTop: high, pitchBottom: low, rows: high - low + 1, cells };
}

const PITCH_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

export function pitchName(pitch: number): string {
  return `${PITCH_NAMES[pitch % 12]}${Math.floor(pitch / 12) - 1}`;
}

export function isBlackKey(pitch: number): boolean {
  return [1, 3, 6, 8, 10].includes(pitch % 12);
}

/** Render a layout into a container element as an absolute-positioned grid. */
export function renderRoll(container: HTMLElement, notes: Note[], className = ""): void {
  const layout = layoutRoll(notes);
  container.textContent = "";
  container.classList.add("piano-roll");
  container.style.setProperty("--rows", String(layout.rows));
  for (let row = 0; row < layout.rows; row += 1) {
    const pitch = layout.pitchTop - row;
    const lane = document.createElement("div");
    lane.className = `roll-lane${isBlackKey(pitch) ? " black-key" : ""}`;
    lane.style.gridRow = String(row + 1);
    lane.style.gridColumn = `1 / span ${STEPS}`;
    lane.title = pitchName(pitch);
    container.appendChild(lane);
  }
  for (let col = 4; col < STEPS; col += 4) {
    const beat = document.createElement("div");
    beat.className = "beat-line";
    beat.style.gridColumn = String(col + 1);
    beat.style.gridRow = `1 / span ${layout.rows}`;
    container.appendChild(beat);
  }
  for (const cell of layout.cells) {
    const block = document.createElement("div");
    block.className = `roll-note ${className}`.trim();
    block.style.gridRow = String(cell.row + 1);
    block.style.gridColumn = `${cell.col + 1} / span ${cell.span}`;
    block.title = `${pitchName(cell.pitch)} @ ${cell.col}`;
    container.appendChild(block);
  }
}
