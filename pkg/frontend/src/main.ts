// Entry point: one websocket, one reducer-held state, canvas + DOM text.
// Query parameters: ?server=host:port&mode=solo|with-assistant

import { messageForKey } from './input.js';
import type { ServerMessage } from './protocol.js';
import { renderFrame } from './render.js';
import { initialState, reduce, type ClientState } from './state.js';

const params = new URLSearchParams(window.location.search);
const server = params.get('server') ?? window.location.host;
const mode = params.get('mode') ?? 'with-assistant';

const canvas = document.getElementById('board') as HTMLCanvasElement;
const ctx = canvas.getContext('2d')!;
const banner = document.getElementById('banner')!;
const scoreline = document.getElementById('scores')!;
const stepline = document.getElementById('stepline')!;

let state: ClientState = initialState();

function draw(): void {
	if (state.error) {
		banner.textContent = `error: ${state.error}`;
		banner.className = 'banner error';
		return;
	}
	if (state.phase === 'in-episode' && state.targetFruit) {
		banner.textContent = `Collect the ${state.targetFruit}`;
		banner.className = `banner target-${state.targetFruit}`;
	} else if (state.phase === 'finished') {
		banner.textContent = 'Session complete, thanks for playing';
		banner.className = 'banner';
	} else {
		banner.textContent = 'Press Enter to start an episode';
		banner.className = 'banner';
	}
	stepline.textContent = `episode ${state.episode} · step ${state.step}/${state.horizon}`;
	const c = state.cumulative;
	scoreline.textContent =
		`episodes ${c.episodes} · total ${c.joint.toFixed(1)} ` +
		`(you ${c.due_to_p.toFixed(1)}, assistant ${c.due_to_a.toFixed(1)}) ` +
		`· this episode ${state.episodeJoint.toFixed(1)}`;
	if (state.frame) renderFrame(ctx, state.frame);
}

const proto = window.location.protocol === 'https:' ? 'wss' : 'ws';
const socket = new WebSocket(`${proto}://${server}/ws?mode=${mode}`);

socket.addEventListener('message', (ev) => {
	const msg = JSON.parse(ev.data as string) as ServerMessage;
	state = reduce(state, msg);
	draw();
});

socket.addEventListener('close', () => {
	state = { ...state, connection: 'closed' };
	banner.textContent = 'Connection closed';
	banner.className = 'banner error';
});

window.addEventListener('keydown', (ev) => {
	const msg = messageForKey(ev.key, state);
	if (!msg) return;
	ev.preventDefault();
	state = { ...state, inFlight: true };
	socket.send(JSON.stringify(msg));
});

draw();
