// Canvas renderer for symbolic state frames. Colors match the server's
// raster palette so the toggleable raw-pixel view lines up visually.

import type { StateFrame } from './protocol.js';

export const CELL_PX = 64;

const COLORS = {
	background: '#1f1f24',
	floor: '#598547',
	lemon: '#edd91f',
	plum: '#85298f',
	principal: '#f05c9e',
	assistant: '#4073eb',
};

export function renderFrame(ctx: CanvasRenderingContext2D, frame: StateFrame): void {
	const { width, height, cells } = frame.grid;
	ctx.canvas.width = width * CELL_PX;
	ctx.canvas.height = height * CELL_PX;
	ctx.fillStyle = COLORS.background;
	ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);

	for (const [x, y] of cells) {
		ctx.fillStyle = COLORS.floor;
		ctx.fillRect(x * CELL_PX + 1, y * CELL_PX + 1, CELL_PX - 2, CELL_PX - 2);
	}

	for (const obj of frame.objects) {
		const [x, y] = obj.cell;
		ctx.fillStyle = obj.class === 0 ? COLORS.lemon : COLORS.plum;
		ctx.beginPath();
		ctx.arc(
			x * CELL_PX + CELL_PX / 2,
			y * CELL_PX + CELL_PX / 2,
			CELL_PX * 0.28,
			0,
			2 * Math.PI,
		);
		ctx.fill();
	}

	const labels = ['P', 'A'];
	const agentColors = [COLORS.principal, COLORS.assistant];
	frame.positions.forEach(([x, y], i) => {
		// Offset the two markers so co-occupying agents stay visible.
		const off = i === 0 ? -CELL_PX * 0.18 : CELL_PX * 0.18;
		const cx = x * CELL_PX + CELL_PX / 2 + off;
		const cy = y * CELL_PX + CELL_PX / 2;
		ctx.fillStyle = agentColors[i];
		ctx.fillRect(cx - CELL_PX * 0.16, cy - CELL_PX * 0.16, CELL_PX * 0.32, CELL_PX * 0.32);
		ctx.fillStyle = '#ffffff';
		ctx.font = `bold ${CELL_PX * 0.25}px sans-serif`;
		ctx.textAlign = 'center';
		ctx.textBaseline = 'middle';
		ctx.fillText(labels[i], cx, cy);
	});
}
