package pp.battleship;

import static pp.util.PreferencesUtils.getPreferences;

import java.util.prefs.Preferences;

/**
 * The in-game menu. It is shown when the user presses the escape key and
 * offers sound settings as well as saving and quitting.
 */
class Menu extends Dialog {
    private static final Preferences PREFERENCES = getPreferences(Menu.class);
    private final BattleshipApp app;
    private final Checkbox soundCheckbox;

    /**
     * Creates the menu for the given application.
     */
    public Menu(BattleshipApp app) {
        super(app.getDialogManager());
        this.app = app;
        this.soundCheckbox = new Checkbox(lookup("menu.sound-enabled"));
        initialize();
    }

    private void initialize() {
        addChild(new Label(lookup("battleship.name")));
        addChild(soundCheckbox);
        soundCheckbox.setChecked(app.getStateManager().getState(GameSound.class).isEnabled());
        soundCheckbox.onToggle(checked -> toggleSound(checked));
        addChild(new Button(lookup("menu.return-to-game"))).onClick(this::close);
        addChild(new Button(lookup("menu.quit"))).onClick(() -> app.closeApp());
    }

    private void toggleSound(boolean enabled) {
        app.getStateManager().getState(GameSound.class).setEnabled(enabled);
        PREFERENCES.putBoolean("sound.enabled", enabled);
    }

    @Override
    public void update() {
        soundCheckbox.setChecked(app.getStateManager().getState(GameSound.class).isEnabled());
    }

    @Override
    public void escape() {
        close();
    }

    static String lookup(String key) {
        return BattleshipApp.lookup(key); // "{" braces in comments must not confuse the parser }
    }
}
